#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

#include "cacmda/evaluation.hpp"
#include "cacmda/rng.hpp"

#include "json.hpp"

namespace cacmda {

namespace {

std::string input_mode_label(InputMode m) {
  return m == InputMode::kSatelliteOnly ? "satellite" : "satellite+sensor";
}

}  // namespace

std::string to_string(ModelVariant m) {
  switch (m) {
    case ModelVariant::kRfSatellite: return "rf";
    case ModelVariant::kRfSatelliteSensor: return "rf_sensor";
    case ModelVariant::kCnnSatellite: return "cnn";
    case ModelVariant::kCnnSatelliteSensor: return "cnn_sensor";
    case ModelVariant::kCnnCacm: return "cnn_cacm";
    case ModelVariant::kCnnCacmContrastive: return "cnn_cacm_contrastive";
    case ModelVariant::kCnnContrastive: return "cnn_contrastive";
  }
  return "?";
}

const std::vector<ModelVariant>& all_model_variants() {
  static const std::vector<ModelVariant> all = {
      ModelVariant::kRfSatellite,        ModelVariant::kRfSatelliteSensor,
      ModelVariant::kCnnSatellite,       ModelVariant::kCnnSatelliteSensor,
      ModelVariant::kCnnCacm,            ModelVariant::kCnnCacmContrastive,
      ModelVariant::kCnnContrastive,
  };
  return all;
}

TrainConfig variant_config(ModelVariant m, const TrainConfig& base,
                           std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.seed = seed;
  switch (m) {
    case ModelVariant::kCnnSatellite:
      cfg.input_mode = InputMode::kSatelliteOnly;
      cfg.weights.recon = 0.0;
      cfg.weights.cacm = 0.0;
      cfg.weights.contrastive = 0.0;
      break;
    case ModelVariant::kCnnSatelliteSensor:
      cfg.input_mode = InputMode::kSatellitePlusAttrs;
      cfg.weights.cacm = 0.0;
      cfg.weights.contrastive = 0.0;
      break;
    // The regularized rows predict from imagery alone; attributes act only
    // through the constraint groups and the contrastive term, so training
    // and satellite-only evaluation see the same conditioning (zero z).
    case ModelVariant::kCnnCacm:
      cfg.input_mode = InputMode::kSatelliteOnly;
      cfg.weights.contrastive = 0.0;
      break;
    case ModelVariant::kCnnCacmContrastive:
      cfg.input_mode = InputMode::kSatelliteOnly;
      cfg.contrastive_on_image = true;
      break;
    case ModelVariant::kCnnContrastive:
      cfg.input_mode = InputMode::kSatelliteOnly;
      cfg.contrastive_on_image = true;
      cfg.weights.cacm = 0.0;
      break;
    case ModelVariant::kRfSatellite:
    case ModelVariant::kRfSatelliteSensor:
      break;  // forest ignores the network config
  }
  return cfg;
}

InputMode variant_eval_mode(ModelVariant m) {
  switch (m) {
    case ModelVariant::kRfSatelliteSensor:
    case ModelVariant::kCnnSatelliteSensor:
      return InputMode::kSatellitePlusAttrs;
    default:
      return InputMode::kSatelliteOnly;
  }
}

CellStats ExperimentReport::aggregate(const std::string& model,
                                      const std::string& strategy,
                                      const std::string& test_env) const {
  std::vector<double> vals;
  for (const auto& r : rows)
    if (r.model == model && (strategy.empty() || r.strategy == strategy) &&
        (test_env.empty() || r.test_env == test_env))
      vals.push_back(r.mse);
  CellStats s;
  s.count = vals.size();
  if (vals.empty()) return s;
  for (double v : vals) s.mean += v;
  s.mean /= static_cast<double>(vals.size());
  for (double v : vals) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(s.stddev / static_cast<double>(vals.size()));
  return s;
}

std::vector<std::string> ExperimentReport::distinct(
    const std::string& field) const {
  std::set<std::string> vals;
  for (const auto& r : rows) {
    if (field == "model") vals.insert(r.model);
    else if (field == "strategy") vals.insert(r.strategy);
    else if (field == "test_env") vals.insert(r.test_env);
    else throw std::invalid_argument("distinct: unknown field " + field);
  }
  return {vals.begin(), vals.end()};
}

double evaluate_mse(const ModelBundle& bundle, const Dataset& ds,
                    const std::vector<EnvironmentId>& envs, InputMode mode) {
  const auto idx = samples_in(ds, envs);
  if (idx.empty())
    throw std::invalid_argument("evaluate_mse: no samples in environments");
  std::vector<double> preds, targets;
  preds.reserve(idx.size());
  targets.reserve(idx.size());
  for (std::size_t i : idx) {
    const Sample& s = ds.samples[i];
    const Vec* attrs =
        mode == InputMode::kSatellitePlusAttrs ? &s.attrs : nullptr;
    preds.push_back(predict_om(bundle, s.tile, attrs));
    targets.push_back(s.om);
  }
  return mse(preds, targets);
}

void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(std::min(jobs, n));
  for (std::size_t w = 0; w < std::min(jobs, n); ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1))
          fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

namespace {

double run_variant(ModelVariant m, const Dataset& raw, const SplitPlan& split,
                   const CausalSpec& spec, const TrainConfig& base,
                   std::uint64_t seed) {
  if (m == ModelVariant::kRfSatellite || m == ModelVariant::kRfSatelliteSensor)
    return rf_baseline(raw, split, variant_eval_mode(m), 100, seed);
  const Dataset scaled = min_max_scale(raw, &split);
  TrainConfig cfg = variant_config(m, base, seed);
  auto [bundle, log] = train(scaled, split, spec, cfg);
  return evaluate_mse(bundle, scaled, split.test_envs, variant_eval_mode(m));
}

}  // namespace

ExperimentReport run_ood_experiment(const Dataset& ds, const CausalSpec& spec,
                                    const TrainConfig& base,
                                    const std::vector<ModelVariant>& models,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::vector<std::string>& test_sites,
                                    std::size_t jobs) {
  const SplitPlan split = make_ood_split(ds, test_sites);
  ExperimentReport report;
  report.name = "ood";
  report.config_hash = config_hash(base);

  struct Task {
    ModelVariant model;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::uint64_t seed : seeds)
    for (ModelVariant m : models) tasks.push_back({m, seed});
  std::vector<double> results(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    results[i] =
        run_variant(tasks[i].model, ds, split, spec, base, tasks[i].seed);
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const ModelVariant m = tasks[i].model;
    const bool rf = m == ModelVariant::kRfSatellite ||
                    m == ModelVariant::kRfSatelliteSensor;
    const bool aux = m == ModelVariant::kCnnCacm ||
                     m == ModelVariant::kCnnCacmContrastive ||
                     m == ModelVariant::kCnnContrastive;
    report.rows.push_back({to_string(m), input_mode_label(variant_eval_mode(m)),
                           aux ? "sensor" : "-", "-", "all", tasks[i].seed,
                           results[i]});
    (void)rf;
  }
  return report;
}

ExperimentReport run_domain_adaptation(
    const Dataset& ds, const CausalSpec& spec, const TrainConfig& base,
    const std::vector<FinetuneStrategy>& strategies,
    const std::vector<ModelVariant>& models,
    const std::vector<std::uint64_t>& seeds, std::size_t jobs) {
  if (ds.sites.size() < 3)
    throw std::invalid_argument("run_domain_adaptation: need >= 3 sites");

  struct Task {
    ModelVariant model;
    FinetuneStrategy strategy;
    std::uint64_t seed;
    SplitPlan plan;
    std::string test_site;
  };
  std::vector<Task> tasks;
  for (FinetuneStrategy strategy : strategies) {
    for (std::uint64_t seed : seeds) {
      // the random strategy draws a fresh site assignment per seed
      const auto plans =
          make_kfold_plans(ds, strategy, derive_seed(base.seed, seed));
      for (std::size_t fold = 0; fold < plans.size(); ++fold)
        for (ModelVariant m : models)
          tasks.push_back({m, strategy, seed, plans[fold],
                           ds.sites[fold].code});
    }
  }

  std::vector<double> results(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    const Dataset scaled = min_max_scale(ds, &t.plan);
    TrainConfig cfg = variant_config(t.model, base, t.seed);
    auto [bundle, log] = train(scaled, t.plan, spec, cfg);
    if (t.strategy != FinetuneStrategy::kNone && !t.plan.finetune_envs.empty())
      bundle = finetune(bundle, scaled, t.plan.finetune_envs, spec, cfg);
    results[i] = evaluate_mse(bundle, scaled, t.plan.test_envs,
                              variant_eval_mode(t.model));
  });

  ExperimentReport report;
  report.name = "domain_adaptation";
  report.config_hash = config_hash(base);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    report.rows.push_back({to_string(t.model),
                           input_mode_label(variant_eval_mode(t.model)),
                           "sensor", to_string(t.strategy), t.test_site,
                           t.seed, results[i]});
  }
  return report;
}

ExperimentReport run_cacm_space_ablation(
    const Dataset& ds, const CausalSpec& spec, const TrainConfig& base,
    const std::vector<std::uint64_t>& seeds,
    const std::vector<std::string>& test_sites, std::size_t jobs) {
  const SplitPlan split = make_ood_split(ds, test_sites);
  struct Task {
    CacmSpace space;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::uint64_t seed : seeds)
    for (CacmSpace space : {CacmSpace::kEncoding, CacmSpace::kOutput})
      tasks.push_back({space, seed});

  std::vector<double> results(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Dataset scaled = min_max_scale(ds, &split);
    TrainConfig cfg =
        variant_config(ModelVariant::kCnnCacm, base, tasks[i].seed);
    cfg.cacm_space = tasks[i].space;
    auto [bundle, log] = train(scaled, split, spec, cfg);
    results[i] = evaluate_mse(bundle, scaled, split.test_envs,
                              InputMode::kSatelliteOnly);
  });

  ExperimentReport report;
  report.name = "cacm_space_ablation";
  report.config_hash = config_hash(base);
  for (std::size_t i = 0; i < tasks.size(); ++i)
    report.rows.push_back(
        {tasks[i].space == CacmSpace::kEncoding ? "cnn_cacm_encoding"
                                                : "cnn_cacm_output",
         "satellite", "sensor", "-", "all", tasks[i].seed, results[i]});
  return report;
}

namespace {

Dataset drop_attribute(const Dataset& ds, std::size_t col) {
  Dataset out = ds;
  out.attribute_schema.erase(out.attribute_schema.begin() +
                             static_cast<std::ptrdiff_t>(col));
  for (auto& s : out.samples)
    s.attrs.erase(s.attrs.begin() + static_cast<std::ptrdiff_t>(col));
  if (!out.scalers.attributes.empty())
    out.scalers.attributes.erase(out.scalers.attributes.begin() +
                                 static_cast<std::ptrdiff_t>(col));
  return out;
}

}  // namespace

ImportanceReport variable_importance(const Dataset& ds, const CausalSpec& spec,
                                     const TrainConfig& base,
                                     const std::vector<std::uint64_t>& seeds,
                                     const SplitPlan& split,
                                     InputMode eval_mode, std::size_t jobs) {
  if (ds.attribute_schema.size() < 2)
    throw std::invalid_argument("variable_importance: need >= 2 attributes");

  const std::size_t n_attr = ds.attribute_schema.size();
  // task index 0 = full model; 1..n = attribute removals, per seed
  struct Task {
    std::size_t attr;  // n_attr == full model
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (std::uint64_t seed : seeds) {
    tasks.push_back({n_attr, seed});
    for (std::size_t a = 0; a < n_attr; ++a) tasks.push_back({a, seed});
  }

  std::vector<double> results(tasks.size());
  parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    Dataset raw = ds;
    CausalSpec reduced_spec = spec;
    if (t.attr < n_attr) {
      reduced_spec = spec.without(ds.attribute_schema[t.attr]);
      raw = drop_attribute(ds, t.attr);
    }
    const Dataset scaled = min_max_scale(raw, &split);
    TrainConfig cfg =
        variant_config(ModelVariant::kCnnCacmContrastive, base, t.seed);
    // attributes-as-input ranking trains with the same conditioning it is
    // evaluated with
    cfg.input_mode = eval_mode;
    cfg.attr.n_attr = static_cast<std::uint32_t>(raw.attribute_schema.size());
    auto [bundle, log] = train(scaled, split, reduced_spec, cfg);
    results[i] = evaluate_mse(bundle, scaled, split.test_envs, eval_mode);
  });

  ImportanceReport report;
  report.config_hash = config_hash(base);
  std::vector<double> gains(n_attr, 0.0);
  double baseline = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    const std::string label =
        t.attr < n_attr ? ds.attribute_schema[t.attr] : "<full>";
    report.detail.push_back({label, "", "", "-", "all", t.seed, results[i]});
    if (t.attr == n_attr)
      baseline += results[i];
    else
      gains[t.attr] += results[i];
  }
  const double n_seeds = static_cast<double>(seeds.size());
  baseline /= n_seeds;
  report.baseline_mse = baseline;
  for (auto& g : gains) g = g / n_seeds - baseline;

  double mean = 0.0;
  for (double g : gains) mean += g;
  mean /= static_cast<double>(n_attr);
  double var = 0.0;
  for (double g : gains) var += (g - mean) * (g - mean);
  var /= static_cast<double>(n_attr);
  const double sd = std::sqrt(var);

  std::vector<std::size_t> order(n_attr);
  for (std::size_t i = 0; i < n_attr; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return gains[a] > gains[b];
  });
  std::vector<std::size_t> rank(n_attr);
  for (std::size_t r = 0; r < n_attr; ++r) rank[order[r]] = r + 1;

  for (std::size_t a = 0; a < n_attr; ++a) {
    ImportanceRow row;
    row.attribute = ds.attribute_schema[a];
    row.raw_gain = gains[a];
    row.standardized_gain = sd > 0.0 ? (gains[a] - mean) / sd : 0.0;
    row.rank = rank[a];
    report.rows.push_back(std::move(row));
  }
  return report;
}

void save_scalers(const DatasetScalers& sc, const std::filesystem::path& path) {
  nlohmann::json j;
  auto dump = [](const MinMaxScaler& s) {
    return nlohmann::json{{"lo", s.lo}, {"hi", s.hi}, {"constant", s.constant}};
  };
  for (const auto& s : sc.tile_channels) j["tile_channels"].push_back(dump(s));
  for (const auto& s : sc.attributes) j["attributes"].push_back(dump(s));
  j["om"] = dump(sc.om);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write scalers: " + path.string());
  out << j.dump(2) << "\n";
}

DatasetScalers load_scalers(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scalers: " + path.string());
  nlohmann::json j;
  in >> j;
  auto parse = [](const nlohmann::json& s) {
    MinMaxScaler out;
    out.lo = s.at("lo").get<double>();
    out.hi = s.at("hi").get<double>();
    out.constant = s.at("constant").get<bool>();
    return out;
  };
  DatasetScalers sc;
  for (const auto& s : j.at("tile_channels")) sc.tile_channels.push_back(parse(s));
  if (j.contains("attributes"))
    for (const auto& s : j.at("attributes")) sc.attributes.push_back(parse(s));
  sc.om = parse(j.at("om"));
  sc.fitted = true;
  return sc;
}

}  // namespace cacmda
