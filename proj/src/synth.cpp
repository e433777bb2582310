#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "cacmda/rng.hpp"
#include "cacmda/synth.hpp"

#include "json.hpp"

namespace cacmda {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string class_attr_name(const char* prefix, std::size_t k) {
  std::string name = prefix;
  name += '_';
  name += static_cast<char>('a' + (k % 26));
  if (k >= 26) name += std::to_string(k / 26);
  return name;
}

// noise multiplier per attribute within a class; index 0 is the cleanest
double noise_mult(std::size_t k) { return 0.5 + 0.5 * static_cast<double>(k); }

}  // namespace

void SynthConfig::validate() const {
  if (n_sites < 1 || years_per_site < 1 || samples_per_env < 1 ||
      tile_size < 1 || attrs_per_class < 1)
    throw std::invalid_argument("synth config: counts must be >= 1");
  if (confound_strength < 0 || confound_strength > 1 ||
      spurious_strength < 0 || spurious_strength > 1)
    throw std::invalid_argument("synth config: strengths must be in [0,1]");
  if (embed_noise < 0 || attr_noise < 0)
    throw std::invalid_argument("synth config: noise must be >= 0");
  if (flip_site_index != std::size_t(-1) && flip_site_index >= n_sites)
    throw std::invalid_argument("synth config: flip site out of range");
}

std::pair<Dataset, GroundTruth> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t n_sites = cfg.n_sites;
  const std::size_t flip_site = cfg.flip_site();
  const std::size_t n_attr = 3 * cfg.attrs_per_class;

  Dataset ds;
  GroundTruth gt;
  gt.confound_strength = cfg.confound_strength;
  gt.spurious_strength = cfg.spurious_strength;

  for (std::size_t k = 0; k < cfg.attrs_per_class; ++k)
    ds.attribute_schema.push_back(class_attr_name("cause", k));
  for (std::size_t k = 0; k < cfg.attrs_per_class; ++k)
    ds.attribute_schema.push_back(class_attr_name("conf", k));
  for (std::size_t k = 0; k < cfg.attrs_per_class; ++k)
    ds.attribute_schema.push_back(class_attr_name("ind", k));
  for (const auto& name : ds.attribute_schema) {
    CausalTag tag = name.starts_with("cause")  ? CausalTag::kCausedByY
                    : name.starts_with("conf") ? CausalTag::kConfounded
                                               : CausalTag::kIndependent;
    gt.causal_spec.tags[name] = tag;
  }
  gt.strongest_cause_attr = class_attr_name("cause", 0);

  // Sites along a south-west to north-east line; the site mean of the latent
  // soil state follows the same axis, so geographically close sites have
  // similar OM distributions.
  std::vector<double> site_mean(n_sites);
  for (std::size_t i = 0; i < n_sites; ++i) {
    SiteId site;
    site.code = "s" + std::to_string(i);
    site.name = "site" + std::to_string(i);
    site.lat = 34.0 + 2.5 * static_cast<double>(i);
    site.lon = -96.0 + 3.0 * static_cast<double>(i);
    ds.sites.push_back(site);
    site_mean[i] =
        n_sites == 1 ? 0.0
                     : -1.0 + 2.0 * static_cast<double>(i) /
                                  static_cast<double>(n_sites - 1);
  }
  gt.flip_site_code = ds.sites[flip_site].code;

  const std::size_t px = cfg.tile_size * cfg.tile_size;
  std::size_t env_counter = 0;
  std::size_t sample_counter = 0;
  for (std::size_t si = 0; si < n_sites; ++si) {
    for (std::size_t yi = 0; yi < cfg.years_per_site; ++yi) {
      EnvironmentId env{ds.sites[si].code, 2018 + static_cast<int>(yi)};
      Rng env_rng(derive_seed(cfg.seed, 0x10000 + env_counter));
      const double confounder = env_rng.normal();
      gt.confounder_per_env[env] = confounder;

      // per-environment means of the independent attributes
      std::vector<double> ind_mean(cfg.attrs_per_class);
      for (auto& m : ind_mean) m = env_rng.normal(0.0, 0.7);

      // spurious channel level: tracks the environment-level expected target
      // except at the flip site
      const double env_y = logistic(0.8 * site_mean[si] +
                                    cfg.confound_strength * confounder);
      double h = 2.0 * env_y - 1.0;
      if (si == flip_site)
        h = cfg.spurious_flip_in_test ? -h : env_rng.uniform(-1.0, 1.0);
      gt.spurious_per_env[env] = h;

      for (std::size_t n = 0; n < cfg.samples_per_env; ++n) {
        Rng rng(derive_seed(cfg.seed, sample_counter));
        Sample s;
        s.id = env.site_code + "_" + std::to_string(env.year) + "_" +
               std::to_string(n);
        s.env = env;
        s.date = std::to_string(env.year) + "-06-15";

        const double latent = rng.normal(site_mean[si], 1.0);
        gt.latent_per_sample.push_back(latent);
        const double y = logistic(0.8 * latent +
                                  cfg.confound_strength * confounder +
                                  rng.normal(0.0, 0.2));
        s.om = y;

        s.attrs.resize(n_attr);
        for (std::size_t k = 0; k < cfg.attrs_per_class; ++k)
          s.attrs[k] = y + rng.normal(0.0, cfg.attr_noise * noise_mult(k));
        for (std::size_t k = 0; k < cfg.attrs_per_class; ++k)
          s.attrs[cfg.attrs_per_class + k] =
              confounder + rng.normal(0.0, cfg.attr_noise * noise_mult(k));
        for (std::size_t k = 0; k < cfg.attrs_per_class; ++k)
          s.attrs[2 * cfg.attrs_per_class + k] =
              ind_mean[k] + rng.normal(0.0, 0.7);

        s.tile.channels = 10;
        s.tile.height = s.tile.width = static_cast<std::uint32_t>(cfg.tile_size);
        s.tile.values.resize(s.tile.size());
        const double phase1 = rng.uniform();
        const double phase2 = rng.uniform();
        // per-sample corruption shared across the two signal channels, so
        // spatial averaging cannot remove it
        const double corrupt = rng.normal(0.0, cfg.embed_noise);
        constexpr double tau = 2.0 * std::numbers::pi;
        for (std::uint32_t c = 0; c < 10; ++c) {
          for (std::uint32_t yy = 0; yy < s.tile.height; ++yy) {
            for (std::uint32_t xx = 0; xx < s.tile.width; ++xx) {
              double v;
              if (c < 2) {
                const double field =
                    0.25 *
                    std::sin(tau * (static_cast<double>(xx) / cfg.tile_size +
                                    phase1)) *
                    std::cos(tau * (static_cast<double>(yy) / cfg.tile_size +
                                    phase2));
                v = y + corrupt + field + rng.normal(0.0, 0.1);
              } else if (c < 9) {
                v = rng.normal(0.0, 1.0);
              } else {
                v = cfg.spurious_strength * h;
              }
              s.tile.at(c, yy, xx) = static_cast<float>(v);
            }
          }
        }
        ds.samples.push_back(std::move(s));
        ++sample_counter;
      }
      ++env_counter;
    }
  }
  ds.rebuild_index();
  return {std::move(ds), std::move(gt)};
}

std::string describe_ground_truth(const GroundTruth& gt) {
  std::ostringstream os;
  os << "causal tags (" << gt.causal_spec.tags.size() << " attributes):\n";
  for (const auto& [name, tag] : gt.causal_spec.tags) {
    os << "  " << name << ": " << to_string(tag);
    if (tag == CausalTag::kConfounded && gt.confound_strength == 0.0)
      os << " (effectively independent: confound strength 0)";
    if (name == gt.strongest_cause_attr) os << " (strongest)";
    os << "\n";
  }
  os << "confounders per environment:\n";
  for (const auto& [env, c] : gt.confounder_per_env)
    os << "  " << env.str() << ": " << c << "\n";
  os << "spurious channel: strength " << gt.spurious_strength
     << ", flip site " << gt.flip_site_code << "\n";
  for (const auto& [env, h] : gt.spurious_per_env)
    os << "  h(" << env.str() << ") = " << h << "\n";
  return os.str();
}

void write_ground_truth(const GroundTruth& gt,
                        const std::filesystem::path& path) {
  nlohmann::json j;
  for (const auto& [name, tag] : gt.causal_spec.tags)
    j["causal_tags"][name] = to_string(tag);
  j["graph_variant"] =
      gt.causal_spec.variant == GraphVariant::kAConfoundedPreferred ? "a" : "b";
  for (const auto& [env, c] : gt.confounder_per_env)
    j["confounder_per_env"][env.str()] = c;
  for (const auto& [env, h] : gt.spurious_per_env)
    j["spurious_per_env"][env.str()] = h;
  j["latent_per_sample"] = gt.latent_per_sample;
  j["flip_site"] = gt.flip_site_code;
  j["strongest_cause_attr"] = gt.strongest_cause_attr;
  j["confound_strength"] = gt.confound_strength;
  j["spurious_strength"] = gt.spurious_strength;
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write ground truth: " + path.string());
  out << j.dump(2) << "\n";
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open ground truth: " + path.string());
  nlohmann::json j;
  in >> j;
  GroundTruth gt;
  for (const auto& [name, tag] : j.at("causal_tags").items())
    gt.causal_spec.tags[name] = parse_causal_tag(tag.get<std::string>());
  gt.causal_spec.variant = j.at("graph_variant").get<std::string>() == "b"
                               ? GraphVariant::kBCausedPreferred
                               : GraphVariant::kAConfoundedPreferred;
  auto parse_env = [](const std::string& s) {
    auto slash = s.find('/');
    return EnvironmentId{s.substr(0, slash),
                         std::stoi(s.substr(slash + 1))};
  };
  for (const auto& [env, c] : j.at("confounder_per_env").items())
    gt.confounder_per_env[parse_env(env)] = c.get<double>();
  for (const auto& [env, h] : j.at("spurious_per_env").items())
    gt.spurious_per_env[parse_env(env)] = h.get<double>();
  gt.latent_per_sample = j.at("latent_per_sample").get<std::vector<double>>();
  gt.flip_site_code = j.at("flip_site").get<std::string>();
  gt.strongest_cause_attr = j.at("strongest_cause_attr").get<std::string>();
  gt.confound_strength = j.at("confound_strength").get<double>();
  gt.spurious_strength = j.at("spurious_strength").get<double>();
  return gt;
}

std::string to_string(CausalTag t) {
  switch (t) {
    case CausalTag::kIndependent: return "independent";
    case CausalTag::kCausedByY: return "caused_by_y";
    case CausalTag::kConfounded: return "confounded";
    case CausalTag::kCausedAndConfounded: return "caused_and_confounded";
    case CausalTag::kExcluded: return "excluded";
  }
  return "?";
}

CausalTag parse_causal_tag(const std::string& s) {
  if (s == "independent") return CausalTag::kIndependent;
  if (s == "caused_by_y") return CausalTag::kCausedByY;
  if (s == "confounded") return CausalTag::kConfounded;
  if (s == "caused_and_confounded") return CausalTag::kCausedAndConfounded;
  if (s == "excluded") return CausalTag::kExcluded;
  throw std::invalid_argument("unknown causal tag: " + s);
}

}  // namespace cacmda
