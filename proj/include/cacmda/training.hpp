#ifndef CACMDA_TRAINING_HPP_
#define CACMDA_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cacmda/data.hpp"
#include "cacmda/geo.hpp"
#include "cacmda/nets.hpp"
#include "cacmda/objectives.hpp"

namespace cacmda {

enum class OptimizerKind { kSgd, kSgdMomentum, kAdaptiveMoment };
enum class Schedule { kBilevelAlternate, kJoint };
enum class InputMode { kSatelliteOnly, kSatellitePlusAttrs };

std::string to_string(OptimizerKind k);
std::string to_string(Schedule s);
std::string to_string(InputMode m);
std::string to_string(CacmSpace s);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdaptiveMoment;
  double momentum = 0.9;
  LossWeights weights;  // task, recon, cacm, contrastive
  Schedule schedule = Schedule::kBilevelAlternate;
  CacmSpace cacm_space = CacmSpace::kEncoding;
  KernelSpec kernel;
  std::size_t min_group_size = 2;
  std::uint64_t seed = 1;
  std::size_t finetune_epochs = 10;
  double finetune_lr = 5e-4;
  bool finetune_with_penalties = true;
  // In satellite-only mode the attribute embedding is the zero vector during
  // training as well; attrs then act only through the regularizers.
  InputMode input_mode = InputMode::kSatellitePlusAttrs;
  bool contrastive_on_image = false;
  bool contrastive_hinge = false;
  double contrastive_margin = 0.0;
  std::size_t pretrain_epochs = 20;

  EncoderConfig encoder;
  AttrConfig attr;
  DecoderConfig decoder;

  void validate() const;
};

// Canonical textual form; hashed into logs and reports.
std::string config_string(const TrainConfig& cfg);
std::string config_hash(const TrainConfig& cfg);

struct TrainLogRow {
  std::size_t epoch = 0;
  std::string stage;  // "A", "B" or "joint"
  double mse = 0.0;
  double recon = 0.0;
  double ind = 0.0;
  double cause = 0.0;
  double conf = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> notes;  // fallbacks, dropped terms, skip summaries

  void write_csv(const std::filesystem::path& path) const;
};

// Tile-reconstruction pretraining over every sample; the deconvolutional
// head is discarded. cfg.pretrain_epochs == 0 returns the seed
// initialization unchanged.
ModelBundle pretrain_encoder(const Dataset& ds, const TrainConfig& cfg);

std::pair<ModelBundle, TrainLog> train(const Dataset& ds,
                                       const SplitPlan& split,
                                       const CausalSpec& spec,
                                       const TrainConfig& cfg,
                                       const ModelBundle* init = nullptr);

// Continues optimization on the given environments only, at finetune_lr for
// finetune_epochs, keeping the bundle's regularizer configuration unless
// cfg.finetune_with_penalties is off.
ModelBundle finetune(const ModelBundle& bundle, const Dataset& ds,
                     const std::vector<EnvironmentId>& env_set,
                     const CausalSpec& spec, const TrainConfig& cfg,
                     TrainLog* log = nullptr);

}  // namespace cacmda

#endif  // CACMDA_TRAINING_HPP_
