#ifndef CACMDA_GEO_HPP_
#define CACMDA_GEO_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace cacmda {

struct SiteId {
  std::string code;  // short lowercase code, e.g. "deh"
  std::string name;
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]
};

// Great-circle distance in kilometres.
double haversine_km(double lat1, double lon1, double lat2, double lon2);
double haversine_km(const SiteId& a, const SiteId& b);

enum class FinetuneStrategy { kNone, kRandom, kClosest, kFarthest };

FinetuneStrategy parse_finetune_strategy(const std::string& s);
std::string to_string(FinetuneStrategy s);

// Picks the fine-tune site relative to the test site. Candidates must be
// non-empty and must not contain the test site. Ties break by site code.
SiteId select_finetune_env(FinetuneStrategy strategy, const SiteId& test_site,
                           const std::vector<SiteId>& candidates,
                           std::uint64_t seed);

// The six G2F study sites with their field-station coordinates.
const std::vector<SiteId>& g2f_sites();

}  // namespace cacmda

#endif  // CACMDA_GEO_HPP_
