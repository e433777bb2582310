#ifndef CACMDA_DATA_HPP_
#define CACMDA_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cacmda/geo.hpp"

namespace cacmda {

struct EnvironmentId {
  std::string site_code;
  int year = 0;

  auto operator<=>(const EnvironmentId&) const = default;
  std::string str() const { return site_code + "/" + std::to_string(year); }
};

// Dense rank-3 image, channel-major then row-major. Payload is float32 so
// that tile files round-trip bit-exactly.
struct ImageTile {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> values;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  float& at(std::uint32_t c, std::uint32_t y, std::uint32_t x) {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(std::uint32_t c, std::uint32_t y, std::uint32_t x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

struct Sample {
  std::string id;
  EnvironmentId env;
  std::string date;  // ISO-8601 calendar date
  ImageTile tile;
  std::vector<double> attrs;  // aligned to Dataset::attribute_schema
  double om = 0.0;
};

struct MinMaxScaler {
  double lo = 0.0;
  double hi = 0.0;
  bool constant = false;  // lo == hi; scaled value is 0 by convention

  double scale(double v) const { return constant ? 0.0 : (v - lo) / (hi - lo); }
  double unscale(double v) const { return constant ? lo : lo + v * (hi - lo); }
};

struct DatasetScalers {
  std::vector<MinMaxScaler> tile_channels;  // one per channel
  std::vector<MinMaxScaler> attributes;     // one per schema column
  MinMaxScaler om;
  bool fitted = false;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> attribute_schema;
  std::vector<SiteId> sites;  // unique, ordered by code
  DatasetScalers scalers;
  bool scaled = false;

  // environment -> sample indices, in manifest order
  std::map<EnvironmentId, std::vector<std::size_t>> env_index;

  void rebuild_index();
  std::vector<EnvironmentId> environments() const;
  const SiteId& site(const std::string& code) const;
  std::size_t attribute_column(const std::string& name) const;
};

enum class SplitKind { kOod, kKfold };

struct SplitPlan {
  SplitKind kind = SplitKind::kOod;
  std::vector<EnvironmentId> train_envs;
  std::vector<EnvironmentId> finetune_envs;
  std::vector<EnvironmentId> test_envs;

  bool in_train(const EnvironmentId& e) const;
  bool in_finetune(const EnvironmentId& e) const;
  bool in_test(const EnvironmentId& e) const;
};

struct AttributeGroups {
  std::string attribute;
  std::vector<std::uint8_t> labels;  // 0 = below mean, 1 = at-or-above mean
  bool degenerate = false;           // one group empty
};

// ----- file I/O ------------------------------------------------------------

// Binary tile container: magic "OMTL", u32 version (=1), u32 channels,
// u32 height, u32 width, float32 payload, little-endian.
ImageTile read_tile(const std::filesystem::path& path);
void write_tile(const ImageTile& tile, const std::filesystem::path& path);

// Manifest CSV schema:
//   sample_id,site_code,site_name,lat,lon,year,date,tile_path,om,<attr...>
// Tile paths resolve relative to the manifest's directory.
Dataset load_manifest(const std::filesystem::path& manifest_path);

// Writes <dir>/manifest.csv plus one tile file per sample under <dir>/tiles/.
void write_manifest(const Dataset& ds, const std::filesystem::path& dir);

std::vector<SiteId> load_sites(const std::filesystem::path& path);
void write_sites(const std::vector<SiteId>& sites,
                 const std::filesystem::path& path);

// ----- scaling -------------------------------------------------------------

// Maps every tile channel, attribute column and om through (v-min)/(max-min).
// When `plan` is given, minima/maxima are fitted on the training environments
// only; `fit_on_all` forces whole-dataset fitting regardless of the plan.
Dataset min_max_scale(const Dataset& ds, const SplitPlan* plan = nullptr,
                      bool fit_on_all = false);

// Applies previously fitted scalers (ds.scalers of `ref`) without refitting.
Dataset apply_scalers(const Dataset& ds, const DatasetScalers& scalers);

// Inverse of min_max_scale using the scalers recorded in `ds`.
Dataset inverse_scale(const Dataset& ds);

// ----- grouping and splits -------------------------------------------------

AttributeGroups binarize_attribute(const std::vector<double>& values,
                                   const std::string& name = "");

SplitPlan make_ood_split(const Dataset& ds,
                         const std::vector<std::string>& test_site_codes);

// One plan per site as held-out test; with a fine-tune strategy each plan
// reserves one additional site chosen by select_finetune_env.
std::vector<SplitPlan> make_kfold_plans(const Dataset& ds,
                                        FinetuneStrategy strategy,
                                        std::uint64_t seed);

std::vector<std::size_t> samples_in(const Dataset& ds,
                                    const std::vector<EnvironmentId>& envs);

}  // namespace cacmda

#endif  // CACMDA_DATA_HPP_
