#ifndef CACMDA_EVALUATION_HPP_
#define CACMDA_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cacmda/data.hpp"
#include "cacmda/training.hpp"

namespace cacmda {

// Table-row model variants: random-forest baselines, the plain backbone in
// both input modes, and the regularized models (which consume attributes as
// auxiliary training data and evaluate satellite-only).
enum class ModelVariant {
  kRfSatellite,
  kRfSatelliteSensor,
  kCnnSatellite,
  kCnnSatelliteSensor,
  kCnnCacm,
  kCnnCacmContrastive,
  kCnnContrastive,
};

std::string to_string(ModelVariant m);
const std::vector<ModelVariant>& all_model_variants();

// Derives the variant's training configuration from a base config.
TrainConfig variant_config(ModelVariant m, const TrainConfig& base,
                           std::uint64_t seed);
InputMode variant_eval_mode(ModelVariant m);

struct ReportRow {
  std::string model;
  std::string input_mode;
  std::string auxiliary;
  std::string strategy;
  std::string test_env;
  std::uint64_t seed = 0;
  double mse = 0.0;
};

struct CellStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

struct ExperimentReport {
  std::string name;
  std::vector<ReportRow> rows;
  std::string config_hash;

  // aggregate over seeds for a (model, strategy, test_env) cell
  CellStats aggregate(const std::string& model, const std::string& strategy,
                      const std::string& test_env) const;
  std::vector<std::string> distinct(const std::string& field) const;
};

struct ImportanceRow {
  std::string attribute;
  double raw_gain = 0.0;          // mean over seeds of (mse_without - mse_full)
  double standardized_gain = 0.0; // population z-score across attributes
  std::size_t rank = 0;           // 1 = most important
};

struct ImportanceReport {
  std::vector<ImportanceRow> rows;       // schema order
  double baseline_mse = 0.0;             // full model, mean over seeds
  std::vector<ReportRow> detail;         // per (attribute, seed) test mse
  std::string config_hash;
};

// ----- operations ----------------------------------------------------------

// Mean squared error of the OM decoder over the samples of `envs`.
// Satellite-only substitutes the zero attribute embedding.
double evaluate_mse(const ModelBundle& bundle, const Dataset& ds,
                    const std::vector<EnvironmentId>& envs, InputMode mode);

ExperimentReport run_ood_experiment(const Dataset& ds, const CausalSpec& spec,
                                    const TrainConfig& base,
                                    const std::vector<ModelVariant>& models,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::vector<std::string>& test_sites,
                                    std::size_t jobs = 1);

ExperimentReport run_domain_adaptation(
    const Dataset& ds, const CausalSpec& spec, const TrainConfig& base,
    const std::vector<FinetuneStrategy>& strategies,
    const std::vector<ModelVariant>& models,
    const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1);

ExperimentReport run_cacm_space_ablation(const Dataset& ds,
                                         const CausalSpec& spec,
                                         const TrainConfig& base,
                                         const std::vector<std::uint64_t>& seeds,
                                         const std::vector<std::string>& test_sites,
                                         std::size_t jobs = 1);

// From-scratch random-forest regressor on per-channel tile means and
// standard deviations (plus the attribute vector in sensor mode).
// max_depth == 0 degenerates to the train-mean predictor.
double rf_baseline(const Dataset& ds, const SplitPlan& split, InputMode mode,
                   std::size_t n_trees, std::uint64_t seed,
                   std::size_t max_depth = 12, std::size_t min_leaf = 2);

// Leave-one-attribute-out retraining of the CACM+Contrastive model.
ImportanceReport variable_importance(const Dataset& ds, const CausalSpec& spec,
                                     const TrainConfig& base,
                                     const std::vector<std::uint64_t>& seeds,
                                     const SplitPlan& split,
                                     InputMode eval_mode,
                                     std::size_t jobs = 1);

// CSV + text summary (+ SVG bar chart for importance reports).
void emit_report(const ExperimentReport& report,
                 const std::filesystem::path& out_dir);
void emit_report(const ImportanceReport& report,
                 const std::filesystem::path& out_dir);

// Scaler persistence for the CLI pipeline (fit at train time, reused at
// evaluation time).
void save_scalers(const DatasetScalers& sc, const std::filesystem::path& path);
DatasetScalers load_scalers(const std::filesystem::path& path);

// Runs fn(0..n-1), possibly on `jobs` worker threads; results must be
// written to per-index slots by the caller.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace cacmda

#endif  // CACMDA_EVALUATION_HPP_
