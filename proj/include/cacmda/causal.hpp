#ifndef CACMDA_CAUSAL_HPP_
#define CACMDA_CAUSAL_HPP_

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cacmda {

enum class CausalTag {
  kIndependent,
  kCausedByY,
  kConfounded,
  kCausedAndConfounded,  // resolved through the graph variant
  kExcluded,
};

enum class GraphVariant {
  kAConfoundedPreferred,  // dual-role attributes treated as confounded
  kBCausedPreferred,      // dual-role attributes treated as caused-by-y
};

struct CausalSpec {
  std::map<std::string, CausalTag> tags;
  GraphVariant variant = GraphVariant::kAConfoundedPreferred;

  // Effective tag after applying the graph variant to dual-role attributes.
  CausalTag resolve(const std::string& attribute) const {
    auto it = tags.find(attribute);
    if (it == tags.end())
      throw std::out_of_range("attribute not in causal spec: " + attribute);
    if (it->second == CausalTag::kCausedAndConfounded)
      return variant == GraphVariant::kAConfoundedPreferred
                 ? CausalTag::kConfounded
                 : CausalTag::kCausedByY;
    return it->second;
  }

  std::vector<std::string> attributes_with(CausalTag tag) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : tags)
      if (resolve(name) == tag) out.push_back(name);
    return out;
  }

  CausalSpec without(const std::string& attribute) const {
    CausalSpec out = *this;
    out.tags.erase(attribute);
    return out;
  }
};

std::string to_string(CausalTag t);
CausalTag parse_causal_tag(const std::string& s);

}  // namespace cacmda

#endif  // CACMDA_CAUSAL_HPP_
