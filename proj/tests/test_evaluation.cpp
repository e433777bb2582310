#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"

#include "cacmda/evaluation.hpp"
#include "cacmda/synth.hpp"

using namespace cacmda;
namespace fs = std::filesystem;

namespace {

std::pair<Dataset, GroundTruth> small_data(std::uint64_t seed = 5) {
  SynthConfig cfg;
  cfg.n_sites = 3;
  cfg.samples_per_env = 10;
  cfg.tile_size = 8;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

TrainConfig small_cfg() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 40;  // full batch keeps per-environment groups viable
  cfg.pretrain_epochs = 0;
  cfg.encoder.in_channels = 10;
  cfg.encoder.height = cfg.encoder.width = 8;
  cfg.encoder.ch1 = 4;
  cfg.encoder.ch2 = 6;
  cfg.encoder.ch3 = 8;
  cfg.encoder.embed_dim = 6;
  cfg.attr.n_attr = 9;
  cfg.attr.hidden = 8;
  cfg.attr.embed_dim = 4;
  cfg.decoder.hidden1 = 8;
  cfg.decoder.hidden2 = 6;
  return cfg;
}

}  // namespace

TEST_CASE("rf with depth zero is the train-mean predictor") {
  auto [ds, gt] = small_data();
  const SplitPlan plan = make_ood_split(ds, {"s2"});

  double mean = 0.0;
  const auto train_idx = samples_in(ds, plan.train_envs);
  for (std::size_t i : train_idx) mean += ds.samples[i].om;
  mean /= static_cast<double>(train_idx.size());

  double expected = 0.0;
  const auto test_idx = samples_in(ds, plan.test_envs);
  for (std::size_t i : test_idx)
    expected += (ds.samples[i].om - mean) * (ds.samples[i].om - mean);
  expected /= static_cast<double>(test_idx.size());

  const double got =
      rf_baseline(ds, plan, InputMode::kSatelliteOnly, 3, 1, /*max_depth=*/0);
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("rf is deterministic and beats the mean predictor in-domain") {
  auto [ds, gt] = small_data();
  const SplitPlan plan = make_ood_split(ds, {"s2"});

  const double a = rf_baseline(ds, plan, InputMode::kSatellitePlusAttrs, 30, 9);
  const double b = rf_baseline(ds, plan, InputMode::kSatellitePlusAttrs, 30, 9);
  CHECK(a == b);

  const double trivial =
      rf_baseline(ds, plan, InputMode::kSatellitePlusAttrs, 30, 9, 0);
  // attributes carry real signal, so real trees must beat the constant model
  CHECK(a < trivial);
}

TEST_CASE("report aggregation over seeds") {
  ExperimentReport r;
  r.rows = {{"m1", "sat", "-", "-", "e", 1, 2.0},
            {"m1", "sat", "-", "-", "e", 2, 4.0},
            {"m2", "sat", "-", "-", "e", 1, 1.0}};
  const CellStats s = r.aggregate("m1", "", "");
  CHECK(s.count == 2);
  CHECK(s.mean == doctest::Approx(3.0));
  CHECK(s.stddev == doctest::Approx(1.0));
  CHECK(r.aggregate("m2", "", "e").mean == doctest::Approx(1.0));
  CHECK(r.aggregate("nope", "", "").count == 0);
  CHECK(r.distinct("model") == std::vector<std::string>{"m1", "m2"});
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 8, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);

  // exceptions propagate
  CHECK_THROWS(parallel_for(10, 4, [](std::size_t i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}

TEST_CASE("scaler persistence round trips") {
  auto [ds, gt] = small_data();
  const Dataset scaled = min_max_scale(ds);
  const fs::path p = fs::temp_directory_path() / "cacmda_test_scalers.json";
  save_scalers(scaled.scalers, p);
  const DatasetScalers back = load_scalers(p);

  REQUIRE(back.tile_channels.size() == scaled.scalers.tile_channels.size());
  REQUIRE(back.attributes.size() == scaled.scalers.attributes.size());
  CHECK(back.om.lo == scaled.scalers.om.lo);
  CHECK(back.om.hi == scaled.scalers.om.hi);
  for (std::size_t i = 0; i < back.attributes.size(); ++i) {
    CHECK(back.attributes[i].lo == scaled.scalers.attributes[i].lo);
    CHECK(back.attributes[i].hi == scaled.scalers.attributes[i].hi);
  }

  // applying the reloaded scalers reproduces the scaled dataset
  const Dataset again = apply_scalers(ds, back);
  for (std::size_t i = 0; i < ds.samples.size(); ++i)
    CHECK(again.samples[i].om ==
          doctest::Approx(scaled.samples[i].om).epsilon(1e-12));
}

TEST_CASE("ood experiment emits one row per model and seed, deterministically") {
  auto [ds, gt] = small_data();
  TrainConfig base = small_cfg();
  const std::vector<ModelVariant> models = {ModelVariant::kRfSatellite,
                                            ModelVariant::kCnnSatellite};
  const std::vector<std::uint64_t> seeds = {1, 2};

  const auto r1 = run_ood_experiment(ds, gt.causal_spec, base, models, seeds,
                                     {"s2"}, 2);
  const auto r2 = run_ood_experiment(ds, gt.causal_spec, base, models, seeds,
                                     {"s2"}, 1);
  REQUIRE(r1.rows.size() == models.size() * seeds.size());
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    CHECK(r1.rows[i].model == r2.rows[i].model);
    CHECK(r1.rows[i].seed == r2.rows[i].seed);
    // jobs=2 and jobs=1 must agree exactly
    CHECK(r1.rows[i].mse == r2.rows[i].mse);
  }
}

TEST_CASE("variant configs zero the right weights") {
  const TrainConfig base = small_cfg();
  const TrainConfig cnn =
      variant_config(ModelVariant::kCnnSatellite, base, 7);
  CHECK(cnn.seed == 7);
  CHECK(cnn.input_mode == InputMode::kSatelliteOnly);
  CHECK(cnn.weights.cacm == 0.0);
  CHECK(cnn.weights.contrastive == 0.0);

  const TrainConfig cacm = variant_config(ModelVariant::kCnnCacm, base, 7);
  CHECK(cacm.weights.cacm == base.weights.cacm);
  CHECK(cacm.weights.contrastive == 0.0);
  // regularized models predict from imagery alone in both phases; attributes
  // act through the constraint groups
  CHECK(cacm.input_mode == InputMode::kSatelliteOnly);
  const TrainConfig con =
      variant_config(ModelVariant::kCnnContrastive, base, 7);
  CHECK(con.contrastive_on_image);
  CHECK(con.weights.cacm == 0.0);
  CHECK(variant_eval_mode(ModelVariant::kCnnCacm) ==
        InputMode::kSatelliteOnly);
  CHECK(variant_eval_mode(ModelVariant::kCnnSatelliteSensor) ==
        InputMode::kSatellitePlusAttrs);
}

TEST_CASE("variable importance standardizes gains to mean 0 and std 1") {
  auto [ds, gt] = small_data();
  const SplitPlan plan = make_ood_split(ds, {"s2"});
  TrainConfig base = small_cfg();
  base.epochs = 1;

  const auto rep = variable_importance(ds, gt.causal_spec, base, {1, 2}, plan,
                                       InputMode::kSatellitePlusAttrs, 4);
  REQUIRE(rep.rows.size() == ds.attribute_schema.size());

  double mean = 0.0, var = 0.0;
  for (const auto& r : rep.rows) mean += r.standardized_gain;
  mean /= static_cast<double>(rep.rows.size());
  for (const auto& r : rep.rows)
    var += (r.standardized_gain - mean) * (r.standardized_gain - mean);
  var /= static_cast<double>(rep.rows.size());
  CHECK(std::abs(mean) < 1e-9);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);

  // ranks are a permutation of 1..n consistent with the gains
  std::vector<bool> seen(rep.rows.size(), false);
  for (const auto& r : rep.rows) {
    REQUIRE(r.rank >= 1);
    REQUIRE(r.rank <= rep.rows.size());
    CHECK_FALSE(seen[r.rank - 1]);
    seen[r.rank - 1] = true;
  }
  for (const auto& a : rep.rows)
    for (const auto& b : rep.rows)
      if (a.rank < b.rank) CHECK(a.raw_gain >= b.raw_gain);
}

TEST_CASE("emit_report writes csv, summary and chart files") {
  const fs::path dir = fs::temp_directory_path() / "cacmda_test_reports";
  fs::remove_all(dir);

  ExperimentReport er;
  er.name = "demo";
  er.config_hash = "cafe";
  er.rows = {{"m1", "sat", "-", "none", "s0", 1, 0.5},
             {"m1", "sat", "-", "none", "s1", 1, 0.7},
             {"m1", "sat", "-", "closest", "s0", 1, 0.4},
             {"m1", "sat", "-", "closest", "s1", 1, 0.6}};
  emit_report(er, dir);
  CHECK(fs::exists(dir / "demo_rows.csv"));
  CHECK(fs::exists(dir / "demo_summary.txt"));
  std::ifstream in(dir / "demo_summary.txt");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("Average") != std::string::npos);
  CHECK(text.find("closest") != std::string::npos);

  ImportanceReport ir;
  ir.config_hash = "cafe";
  ir.baseline_mse = 0.1;
  ir.rows = {{"a", 0.2, 1.0, 1}, {"b", -0.2, -1.0, 2}};
  ir.detail = {{"a", "", "", "-", "all", 1, 0.3}};
  emit_report(ir, dir);
  CHECK(fs::exists(dir / "importance.csv"));
  CHECK(fs::exists(dir / "importance_summary.txt"));
  CHECK(fs::exists(dir / "importance.svg"));
  std::ifstream svg(dir / "importance.svg");
  std::string body((std::istreambuf_iterator<char>(svg)), {});
  CHECK(body.find("<svg") != std::string::npos);
  CHECK(body.find("rect") != std::string::npos);
}
