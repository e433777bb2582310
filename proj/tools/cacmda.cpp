// cacmda: synthesize data, train and adapt organic-matter regressors, and
// produce the experiment reports, all from one binary.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cacmda/data.hpp"
#include "cacmda/evaluation.hpp"
#include "cacmda/synth.hpp"
#include "cacmda/training.hpp"

namespace fs = std::filesystem;
using namespace cacmda;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ----- config file ---------------------------------------------------------

struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  CausalSpec causal;
  bool has_causal = false;
  std::vector<std::string> models;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<std::string> test_sites;
  std::vector<std::string> strategies = {"none", "random", "closest",
                                         "farthest"};
  std::size_t rf_trees = 100;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("expected boolean, got '" + v + "'");
}

std::uint64_t parse_u64(const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t out = std::stoull(v, &pos);
    if (pos == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw UsageError("expected integer, got '" + v + "'");
}

double parse_double(const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw UsageError("expected number, got '" + v + "'");
}

OptimizerKind parse_optimizer(const std::string& v) {
  if (v == "sgd") return OptimizerKind::kSgd;
  if (v == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  if (v == "adaptive_moment") return OptimizerKind::kAdaptiveMoment;
  throw UsageError("unknown optimizer '" + v + "'");
}

Schedule parse_schedule(const std::string& v) {
  if (v == "bilevel") return Schedule::kBilevelAlternate;
  if (v == "joint") return Schedule::kJoint;
  throw UsageError("unknown schedule '" + v + "'");
}

InputMode parse_input_mode(const std::string& v) {
  if (v == "satellite") return InputMode::kSatelliteOnly;
  if (v == "satellite_attrs") return InputMode::kSatellitePlusAttrs;
  throw UsageError("unknown input mode '" + v + "'");
}

CacmSpace parse_cacm_space(const std::string& v) {
  if (v == "encoding") return CacmSpace::kEncoding;
  if (v == "output") return CacmSpace::kOutput;
  throw UsageError("unknown constraint space '" + v + "'");
}

ModelVariant parse_model(const std::string& v) {
  for (ModelVariant m : all_model_variants())
    if (to_string(m) == v) return m;
  throw UsageError("unknown model '" + v + "'");
}

void apply_config_key(RunConfig& rc, const std::string& key,
                      const std::string& val) {
  auto u32 = [&] { return static_cast<std::uint32_t>(parse_u64(val)); };
  auto sz = [&] { return static_cast<std::size_t>(parse_u64(val)); };

  if (key == "synth.n_sites") rc.synth.n_sites = sz();
  else if (key == "synth.years_per_site") rc.synth.years_per_site = sz();
  else if (key == "synth.samples_per_env") rc.synth.samples_per_env = sz();
  else if (key == "synth.tile_size") rc.synth.tile_size = sz();
  else if (key == "synth.attrs_per_class") rc.synth.attrs_per_class = sz();
  else if (key == "synth.embed_noise") rc.synth.embed_noise = parse_double(val);
  else if (key == "synth.attr_noise") rc.synth.attr_noise = parse_double(val);
  else if (key == "synth.confound_strength")
    rc.synth.confound_strength = parse_double(val);
  else if (key == "synth.spurious_strength")
    rc.synth.spurious_strength = parse_double(val);
  else if (key == "synth.spurious_flip_in_test")
    rc.synth.spurious_flip_in_test = parse_bool(val);
  else if (key == "synth.flip_site_index") rc.synth.flip_site_index = sz();
  else if (key == "train.epochs") rc.train.epochs = sz();
  else if (key == "train.batch_size") rc.train.batch_size = sz();
  else if (key == "train.learning_rate")
    rc.train.learning_rate = parse_double(val);
  else if (key == "train.optimizer") rc.train.optimizer = parse_optimizer(val);
  else if (key == "train.momentum") rc.train.momentum = parse_double(val);
  else if (key == "train.weight_task") rc.train.weights.task = parse_double(val);
  else if (key == "train.weight_recon")
    rc.train.weights.recon = parse_double(val);
  else if (key == "train.weight_cacm") rc.train.weights.cacm = parse_double(val);
  else if (key == "train.weight_contrastive")
    rc.train.weights.contrastive = parse_double(val);
  else if (key == "train.schedule") rc.train.schedule = parse_schedule(val);
  else if (key == "train.cacm_space")
    rc.train.cacm_space = parse_cacm_space(val);
  else if (key == "train.kernel_bandwidth") {
    if (val == "median")
      rc.train.kernel.bandwidth = KernelSpec::Bandwidth::kMedianHeuristic;
    else if (val == "fixed")
      rc.train.kernel.bandwidth = KernelSpec::Bandwidth::kFixed;
    else throw UsageError("unknown kernel bandwidth '" + val + "'");
  } else if (key == "train.kernel_sigma")
    rc.train.kernel.sigma = parse_double(val);
  else if (key == "train.min_group_size") rc.train.min_group_size = sz();
  else if (key == "train.finetune_epochs") rc.train.finetune_epochs = sz();
  else if (key == "train.finetune_lr")
    rc.train.finetune_lr = parse_double(val);
  else if (key == "train.finetune_with_penalties")
    rc.train.finetune_with_penalties = parse_bool(val);
  else if (key == "train.input_mode")
    rc.train.input_mode = parse_input_mode(val);
  else if (key == "train.contrastive_on_image")
    rc.train.contrastive_on_image = parse_bool(val);
  else if (key == "train.contrastive_hinge")
    rc.train.contrastive_hinge = parse_bool(val);
  else if (key == "train.contrastive_margin")
    rc.train.contrastive_margin = parse_double(val);
  else if (key == "train.pretrain_epochs") rc.train.pretrain_epochs = sz();
  else if (key == "encoder.ch1") rc.train.encoder.ch1 = u32();
  else if (key == "encoder.ch2") rc.train.encoder.ch2 = u32();
  else if (key == "encoder.ch3") rc.train.encoder.ch3 = u32();
  else if (key == "encoder.embed_dim") rc.train.encoder.embed_dim = u32();
  else if (key == "attr.hidden") rc.train.attr.hidden = u32();
  else if (key == "attr.embed_dim") rc.train.attr.embed_dim = u32();
  else if (key == "decoder.hidden1") rc.train.decoder.hidden1 = u32();
  else if (key == "decoder.hidden2") rc.train.decoder.hidden2 = u32();
  else if (key == "experiment.models") rc.models = split_list(val);
  else if (key == "experiment.seeds") {
    rc.seeds.clear();
    for (const auto& s : split_list(val)) rc.seeds.push_back(parse_u64(s));
  } else if (key == "experiment.test_sites") rc.test_sites = split_list(val);
  else if (key == "experiment.strategies") rc.strategies = split_list(val);
  else if (key == "experiment.rf_trees") rc.rf_trees = sz();
  else if (key == "graph_variant") {
    if (val == "a") rc.causal.variant = GraphVariant::kAConfoundedPreferred;
    else if (val == "b") rc.causal.variant = GraphVariant::kBCausedPreferred;
    else throw UsageError("unknown graph variant '" + val + "' (a|b)");
  } else if (key.rfind("causal.", 0) == 0) {
    rc.causal.tags[key.substr(7)] = parse_causal_tag(val);
    rc.has_causal = true;
  } else {
    throw UsageError("unknown config key '" + key + "'");
  }
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  RunConfig rc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const auto b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) +
                       ": expected key=value");
    auto trim = [](std::string s) {
      const auto x = s.find_first_not_of(" \t");
      const auto y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    try {
      apply_config_key(rc, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return rc;
}

// ----- shared plumbing -----------------------------------------------------

fs::path default_out(const std::string& sub) {
  const char* root = std::getenv("CACMDA_RUN_DIR");
  return fs::path(root ? root : "runs") / sub;
}

void check_out(const fs::path& out, bool force,
               const std::vector<std::string>& products) {
  for (const auto& p : products) {
    if (fs::exists(out / p)) {
      if (!force)
        throw UsageError("output " + (out / p).string() +
                         " exists; pass --force to overwrite");
      fs::remove_all(out / p);
    }
  }
  fs::create_directories(out);
}

CausalSpec resolve_causal(const RunConfig& rc, const fs::path& data_dir) {
  if (rc.has_causal) return rc.causal;
  const fs::path gt = data_dir / "ground_truth.json";
  if (fs::exists(gt)) {
    GroundTruth g = load_ground_truth(gt);
    g.causal_spec.variant = rc.causal.variant;
    return g.causal_spec;
  }
  throw UsageError(
      "no causal tags: provide causal.<attr> keys in the config or a "
      "ground_truth.json next to the manifest");
}

std::vector<ModelVariant> resolve_models(const RunConfig& rc,
                                         const std::string& flag) {
  std::vector<std::string> names =
      flag.empty() ? rc.models : split_list(flag);
  if (names.empty()) return all_model_variants();
  std::vector<ModelVariant> out;
  for (const auto& n : names) out.push_back(parse_model(n));
  return out;
}

Dataset load_scaled(const fs::path& data_dir, const SplitPlan* plan) {
  Dataset ds = load_manifest(data_dir / "manifest.csv");
  return min_max_scale(ds, plan);
}

// Input layer sizes follow the data, not the config file.
void fit_config_to_data(TrainConfig& cfg, const Dataset& ds) {
  if (ds.samples.empty()) return;
  cfg.attr.n_attr = static_cast<std::uint32_t>(ds.attribute_schema.size());
  const ImageTile& t = ds.samples.front().tile;
  cfg.encoder.in_channels = t.channels;
  cfg.encoder.height = t.height;
  cfg.encoder.width = t.width;
}

// ----- subcommand bodies ---------------------------------------------------

int cmd_synth(const RunConfig& rc, std::uint64_t seed, const fs::path& out,
              bool force) {
  SynthConfig cfg = rc.synth;
  cfg.seed = seed;
  cfg.validate();
  check_out(out, force, {"manifest.csv", "tiles", "ground_truth.json"});
  auto [ds, gt] = generate_synthetic(cfg);
  write_manifest(ds, out);
  write_ground_truth(gt, out / "ground_truth.json");
  std::cout << describe_ground_truth(gt);
  std::cout << "wrote " << ds.samples.size() << " samples to " << out.string()
            << "\n";
  return 0;
}

int cmd_pretrain(const RunConfig& rc, std::uint64_t seed,
                 const fs::path& data_dir, const fs::path& out, bool force) {
  TrainConfig cfg = rc.train;
  cfg.seed = seed;
  check_out(out, force, {"pretrained.ommb", "scalers.json", "config.txt"});
  const Dataset scaled = load_scaled(data_dir, nullptr);
  fit_config_to_data(cfg, scaled);
  const ModelBundle b = pretrain_encoder(scaled, cfg);
  save_bundle(b, out / "pretrained.ommb");
  save_scalers(scaled.scalers, out / "scalers.json");
  std::ofstream(out / "config.txt") << config_string(cfg);
  std::cout << "wrote " << (out / "pretrained.ommb").string() << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, std::uint64_t seed, const fs::path& data_dir,
              const fs::path& out, bool force, const std::string& test_sites,
              const std::string& init_path) {
  TrainConfig cfg = rc.train;
  cfg.seed = seed;
  const auto sites =
      test_sites.empty() ? rc.test_sites : split_list(test_sites);
  if (sites.empty())
    throw UsageError("train: --test-sites (or experiment.test_sites) required");
  check_out(out, force,
            {"final.ommb", "scalers.json", "train_log.csv", "config.txt"});

  Dataset ds = load_manifest(data_dir / "manifest.csv");
  const SplitPlan plan = make_ood_split(ds, sites);
  const Dataset scaled = min_max_scale(ds, &plan);
  fit_config_to_data(cfg, scaled);
  const CausalSpec spec = resolve_causal(rc, data_dir);

  std::optional<ModelBundle> init;
  if (!init_path.empty()) init = load_bundle(init_path);
  auto [bundle, log] =
      train(scaled, plan, spec, cfg, init ? &*init : nullptr);
  save_bundle(bundle, out / "final.ommb");
  save_scalers(scaled.scalers, out / "scalers.json");
  log.write_csv(out / "train_log.csv");
  std::ofstream(out / "config.txt") << config_string(cfg);
  for (const auto& n : log.notes) std::cerr << "note: " << n << "\n";
  std::cout << "final train-epoch mse "
            << (log.rows.empty() ? 0.0 : log.rows.back().mse) << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc, std::uint64_t seed, const fs::path& data_dir,
             const fs::path& out, bool force, const std::string& bundle_path,
             const std::string& scalers_path, const std::string& test_sites,
             const std::string& mode, const std::string& models_flag,
             std::size_t jobs) {
  const auto sites =
      test_sites.empty() ? rc.test_sites : split_list(test_sites);
  if (sites.empty())
    throw UsageError("eval: --test-sites (or experiment.test_sites) required");

  if (!bundle_path.empty()) {
    // single-bundle evaluation: print the held-out mse
    Dataset ds = load_manifest(data_dir / "manifest.csv");
    fs::path sp = scalers_path.empty()
                      ? fs::path(bundle_path).parent_path() / "scalers.json"
                      : fs::path(scalers_path);
    const Dataset scaled = apply_scalers(ds, load_scalers(sp));
    const SplitPlan plan = make_ood_split(scaled, sites);
    const ModelBundle b = load_bundle(bundle_path);
    const double m = evaluate_mse(b, scaled, plan.test_envs,
                                  parse_input_mode(mode));
    std::cout << "mse " << std::setprecision(10) << m << "\n";
    return 0;
  }

  // model-table experiment over seeds
  TrainConfig base = rc.train;
  base.seed = seed;
  check_out(out, force, {"ood_rows.csv", "ood_summary.txt"});
  Dataset ds = load_manifest(data_dir / "manifest.csv");
  fit_config_to_data(base, ds);
  const CausalSpec spec = resolve_causal(rc, data_dir);
  const auto report = run_ood_experiment(ds, spec, base,
                                         resolve_models(rc, models_flag),
                                         rc.seeds, sites, jobs);
  emit_report(report, out);
  std::cout << "wrote " << (out / "ood_summary.txt").string() << "\n";
  return 0;
}

int cmd_adapt(const RunConfig& rc, std::uint64_t seed, const fs::path& data_dir,
              const fs::path& out, bool force, const std::string& models_flag,
              const std::string& strategies_flag, std::size_t jobs) {
  TrainConfig base = rc.train;
  base.seed = seed;
  check_out(out, force,
            {"domain_adaptation_rows.csv", "domain_adaptation_summary.txt"});
  Dataset ds = load_manifest(data_dir / "manifest.csv");
  fit_config_to_data(base, ds);
  const CausalSpec spec = resolve_causal(rc, data_dir);
  std::vector<FinetuneStrategy> strategies;
  for (const auto& s :
       strategies_flag.empty() ? rc.strategies : split_list(strategies_flag))
    strategies.push_back(parse_finetune_strategy(s));
  const auto report =
      run_domain_adaptation(ds, spec, base, strategies,
                            resolve_models(rc, models_flag), rc.seeds, jobs);
  emit_report(report, out);
  std::cout << "wrote " << (out / "domain_adaptation_summary.txt").string()
            << "\n";
  return 0;
}

int cmd_importance(const RunConfig& rc, std::uint64_t seed,
                   const fs::path& data_dir, const fs::path& out, bool force,
                   const std::string& test_sites, const std::string& mode,
                   std::size_t jobs) {
  TrainConfig base = rc.train;
  base.seed = seed;
  const auto sites =
      test_sites.empty() ? rc.test_sites : split_list(test_sites);
  if (sites.empty())
    throw UsageError("importance: --test-sites required");
  check_out(out, force,
            {"importance.csv", "importance_summary.txt", "importance.svg",
             "importance_detail.csv"});
  Dataset ds = load_manifest(data_dir / "manifest.csv");
  fit_config_to_data(base, ds);
  const CausalSpec spec = resolve_causal(rc, data_dir);
  const SplitPlan plan = make_ood_split(ds, sites);
  const auto report = variable_importance(ds, spec, base, rc.seeds, plan,
                                          parse_input_mode(mode), jobs);
  emit_report(report, out);
  std::cout << "wrote " << (out / "importance_summary.txt").string() << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& rc, std::uint64_t seed,
               const fs::path& data_dir, const fs::path& out, bool force,
               const std::string& test_sites, std::size_t jobs) {
  TrainConfig base = rc.train;
  base.seed = seed;
  const auto sites =
      test_sites.empty() ? rc.test_sites : split_list(test_sites);
  if (sites.empty())
    throw UsageError("ablate-cacm-space: --test-sites required");
  check_out(out, force,
            {"cacm_space_ablation_rows.csv", "cacm_space_ablation_summary.txt"});
  Dataset ds = load_manifest(data_dir / "manifest.csv");
  fit_config_to_data(base, ds);
  const CausalSpec spec = resolve_causal(rc, data_dir);
  const auto report =
      run_cacm_space_ablation(ds, spec, base, rc.seeds, sites, jobs);
  emit_report(report, out);
  std::cout << "wrote " << (out / "cacm_space_ablation_summary.txt").string()
            << "\n";
  return 0;
}

int cmd_report(const fs::path& rows_path, const std::string& name,
               const fs::path& out, bool force) {
  std::ifstream in(rows_path);
  if (!in) throw UsageError("cannot open rows file: " + rows_path.string());
  check_out(out, force, {name + "_rows.csv", name + "_summary.txt"});

  ExperimentReport report;
  report.name = name;
  report.config_hash = "n/a";
  std::string line;
  if (!std::getline(in, line) ||
      line != "model,input_mode,auxiliary,strategy,test_env,seed,mse")
    throw UsageError("unrecognized rows header in " + rows_path.string());
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cols = split_list(line);
    if (cols.size() != 7)
      throw UsageError(rows_path.string() + ":" + std::to_string(lineno) +
                       ": expected 7 columns");
    report.rows.push_back({cols[0], cols[1], cols[2], cols[3], cols[4],
                           parse_u64(cols[5]), parse_double(cols[6])});
  }
  emit_report(report, out);
  std::cout << "wrote " << (out / (name + "_summary.txt")).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive organic-matter regression toolkit"};
  app.require_subcommand(1);

  // shared per-subcommand state
  std::string config_path, data_dir, out_dir, test_sites, models, strategies;
  std::string bundle_path, scalers_path, init_path, rows_path;
  std::string eval_mode = "satellite";
  std::string report_name = "report";
  std::vector<std::string> set_overrides;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::size_t jobs = 1;
  bool force = false;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    sub->add_option("--config", config_path, "key=value run configuration");
    sub->add_option("--set", set_overrides,
                    "override a config key (key=value), repeatable");
    sub->add_option("--seed", seed, "master random seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_dir, "output directory");
    sub->add_flag("--force", force, "overwrite existing outputs");
    if (needs_data)
      sub->add_option("--data", data_dir, "dataset directory (manifest.csv)")
          ->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, false);

  CLI::App* pretrain =
      app.add_subcommand("pretrain", "reconstruction-pretrain the encoder");
  add_common(pretrain, true);

  CLI::App* train_cmd = app.add_subcommand("train", "train one model");
  add_common(train_cmd, true);
  train_cmd->add_option("--test-sites", test_sites,
                        "held-out site codes, comma separated");
  train_cmd->add_option("--init", init_path, "initial bundle file");

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "evaluate a bundle, or run the model-table experiment");
  add_common(eval_cmd, true);
  eval_cmd->add_option("--test-sites", test_sites, "held-out site codes");
  eval_cmd->add_option("--bundle", bundle_path, "bundle file to evaluate");
  eval_cmd->add_option("--scalers", scalers_path,
                       "scalers file (default: next to the bundle)");
  eval_cmd->add_option("--mode", eval_mode,
                       "inference input mode: satellite|satellite_attrs");
  eval_cmd->add_option("--models", models, "model variants, comma separated");
  eval_cmd->add_option("--jobs", jobs, "max worker threads");

  CLI::App* adapt =
      app.add_subcommand("adapt", "K-fold fine-tuning strategy comparison");
  add_common(adapt, true);
  adapt->add_option("--models", models, "model variants, comma separated");
  adapt->add_option("--strategies", strategies,
                    "none|random|closest|farthest, comma separated");
  adapt->add_option("--jobs", jobs, "max worker threads");

  CLI::App* importance =
      app.add_subcommand("importance", "leave-one-attribute-out importance");
  add_common(importance, true);
  importance->add_option("--test-sites", test_sites, "held-out site codes");
  importance->add_option("--mode", eval_mode,
                         "evaluation input mode: satellite|satellite_attrs");
  importance->add_option("--jobs", jobs, "max worker threads");

  CLI::App* ablate = app.add_subcommand(
      "ablate-cacm-space", "encoding- vs output-space constraint ablation");
  add_common(ablate, true);
  ablate->add_option("--jobs", jobs, "max worker threads");
  ablate->add_option("--test-sites", test_sites, "held-out site codes");

  CLI::App* report =
      app.add_subcommand("report", "regenerate summaries from a rows CSV");
  add_common(report, false);
  report->add_option("--rows", rows_path, "rows CSV from a previous run")
      ->required();
  report->add_option("--name", report_name, "report name prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) rc = load_run_config(config_path);
    for (const std::string& kv : set_overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw UsageError("--set expects key=value, got '" + kv + "'");
      apply_config_key(rc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed_given) {
      rc.synth.seed = seed;
      rc.train.seed = seed;
    } else {
      seed = rc.train.seed;
    }

    CLI::App* sub = app.get_subcommands().front();
    const fs::path out =
        out_dir.empty() ? default_out(sub->get_name()) : fs::path(out_dir);

    if (sub == synth) return cmd_synth(rc, seed, out, force);
    if (sub == pretrain) return cmd_pretrain(rc, seed, data_dir, out, force);
    if (sub == train_cmd)
      return cmd_train(rc, seed, data_dir, out, force, test_sites, init_path);
    if (sub == eval_cmd)
      return cmd_eval(rc, seed, data_dir, out, force, bundle_path,
                      scalers_path, test_sites, eval_mode, models, jobs);
    if (sub == adapt)
      return cmd_adapt(rc, seed, data_dir, out, force, models, strategies,
                       jobs);
    if (sub == importance)
      return cmd_importance(rc, seed, data_dir, out, force, test_sites,
                            eval_mode, jobs);
    if (sub == ablate)
      return cmd_ablate(rc, seed, data_dir, out, force, test_sites, jobs);
    if (sub == report) return cmd_report(rows_path, report_name, out, force);
    std::cerr << "error: unknown subcommand\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
