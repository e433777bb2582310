#ifndef CACMDA_SYNTH_HPP_
#define CACMDA_SYNTH_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "cacmda/causal.hpp"
#include "cacmda/data.hpp"

namespace cacmda {

// Structural-causal-model generator. Per sample: latent soil state
// L ~ N(site mean, 1), per-environment confounder C_e, target
// y = logistic(0.8 L + gamma C_e + eps). Attributes come in three classes
// (caused by y / confounded / independent), three per class by default.
// The last tile channel carries a per-environment constant spuriously
// correlated with y in every site except the designated flip site.
struct SynthConfig {
  std::size_t n_sites = 6;
  std::size_t years_per_site = 2;
  std::size_t samples_per_env = 20;
  std::size_t tile_size = 16;
  std::size_t attrs_per_class = 3;
  double embed_noise = 0.25;      // per-sample corruption of the signal channels
  double attr_noise = 0.1;        // base attribute noise std
  double confound_strength = 0.5;   // gamma in [0,1]
  double spurious_strength = 0.8;   // s in [0,1]
  bool spurious_flip_in_test = true;
  std::size_t flip_site_index = std::size_t(-1);  // default: last site
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t flip_site() const {
    return flip_site_index == std::size_t(-1) ? n_sites - 1 : flip_site_index;
  }
};

struct GroundTruth {
  CausalSpec causal_spec;
  std::vector<double> latent_per_sample;
  std::map<EnvironmentId, double> confounder_per_env;
  std::map<EnvironmentId, double> spurious_per_env;  // h(e)
  std::string flip_site_code;
  std::string strongest_cause_attr;  // lowest-noise caused-by attribute
  double confound_strength = 0.0;
  double spurious_strength = 0.0;
};

std::pair<Dataset, GroundTruth> generate_synthetic(const SynthConfig& cfg);

std::string describe_ground_truth(const GroundTruth& gt);

// ground_truth.json round trip (causal tags, per-env confounders, spurious
// channel setup).
void write_ground_truth(const GroundTruth& gt,
                        const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace cacmda

#endif  // CACMDA_SYNTH_HPP_
