// Acceptance gate: one pass/fail line per criterion. Directional checks that
// mirror small published margins (5 and 10) warn instead of failing.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>
#include <vector>

#include "cacmda/evaluation.hpp"
#include "cacmda/synth.hpp"
#include "cacmda/training.hpp"

using namespace cacmda;
namespace fs = std::filesystem;

namespace {

int hard_failures = 0;

void report(int id, const std::string& name, bool pass, bool soft,
            const std::string& detail, double seconds) {
  const char* tag = pass ? "PASS" : (soft ? "WARN" : "FAIL");
  if (!pass && !soft) ++hard_failures;
  std::ostringstream line;
  line << tag << "  criterion " << id << "  " << name;
  if (!detail.empty()) line << "  [" << detail << "]";
  line << "  (" << std::fixed << std::setprecision(1) << seconds << "s)";
  std::cout << line.str() << std::endl;
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::size_t jobs() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 4 : n;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return m / static_cast<double>(v.size());
}

PointSet random_points(Rng& rng, std::size_t n, std::size_t d) {
  PointSet out(n, Vec(d));
  for (auto& p : out)
    for (double& v : p) v = rng.normal();
  return out;
}

double sqd(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double mmd2_brute(const PointSet& x, const PointSet& y, double sigma) {
  auto k = [&](const Vec& a, const Vec& b) {
    return std::exp(-sqd(a, b) / (2.0 * sigma * sigma));
  };
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  const bool equal = x.size() == y.size();
  double xx = 0, yy = 0, xy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      if (i != j) xx += k(x[i], x[j]);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (i != j) yy += k(y[i], y[j]);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (!(equal && i == j)) xy += k(x[i], y[j]);
  const double cxy = equal ? 2.0 / (n * (n - 1)) : 2.0 / (n * m);
  return xx / (n * (n - 1)) + yy / (m * (m - 1)) - cxy * xy;
}

KernelSpec fixed_kernel(double sigma) {
  KernelSpec k;
  k.bandwidth = KernelSpec::Bandwidth::kFixed;
  k.sigma = sigma;
  return k;
}

// ----- shared benchmark configuration --------------------------------------

SynthConfig benchmark_synth(std::uint64_t seed) {
  SynthConfig cfg;  // 6 sites x 2 years x 20 samples, 16x16x10 tiles, s=0.8
  // weak per-sample signal and a strong environment-level component make the
  // spurious channel the attractive shortcut for an unconstrained model
  cfg.embed_noise = 4.0;
  cfg.confound_strength = 1.0;
  cfg.seed = seed;
  return cfg;
}

TrainConfig benchmark_train() {
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.batch_size = 100;  // 10 samples per training environment
  cfg.learning_rate = 2e-3;
  cfg.pretrain_epochs = 0;
  cfg.weights.cacm = 1.0;
  cfg.weights.recon = 0.1;
  cfg.weights.contrastive = 0.1;
  cfg.encoder.ch1 = 8;
  cfg.encoder.ch2 = 16;
  cfg.encoder.ch3 = 16;
  cfg.encoder.embed_dim = 16;
  cfg.attr.hidden = 16;
  cfg.attr.embed_dim = 8;
  cfg.decoder.hidden1 = 32;
  cfg.decoder.hidden2 = 16;
  return cfg;
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

std::vector<double> seed_mses(const ExperimentReport& r,
                              const std::string& model) {
  std::vector<double> out;
  for (const auto& row : r.rows)
    if (row.model == model) out.push_back(row.mse);
  return out;
}

// ----- criteria ------------------------------------------------------------

void criterion_1() {
  Timer t;
  bool pass = true;
  std::ostringstream detail;

  const double hand = mmd2({{0.0}, {0.0}}, {{1.0}, {1.0}}, fixed_kernel(1.0));
  const double expected = 2.0 - 2.0 * std::exp(-0.5);
  if (std::abs(hand - expected) > 1e-12) {
    pass = false;
    detail << "hand case " << hand << " != " << expected << "; ";
  }

  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.index(49), m = 2 + rng.index(49);
    const std::size_t d = 1 + rng.index(16);
    const PointSet x = random_points(rng, n, d);
    const PointSet y = random_points(rng, m, d);
    const double sigma = 0.5 + rng.uniform();
    worst = std::max(worst, std::abs(mmd2(x, y, fixed_kernel(sigma)) -
                                     mmd2_brute(x, y, sigma)));
  }
  if (worst > 1e-10) pass = false;

  const PointSet x = random_points(rng, 10, 5);
  const double self = std::abs(mmd2(x, x, fixed_kernel(1.0)));
  if (self > 1e-9) pass = false;

  detail << "max |diff| " << worst << ", self " << self;
  report(1, "mmd estimator matches brute-force oracle", pass, false,
         detail.str(), t.s());
}

void criterion_2() {
  Timer t;
  double worst = 0.0;

  EncoderConfig enc;
  enc.in_channels = 2;
  enc.height = enc.width = 8;
  enc.ch1 = 2;
  enc.ch2 = 3;
  enc.ch3 = 4;
  enc.embed_dim = 4;
  AttrConfig att;
  att.n_attr = 5;
  att.hidden = 6;
  att.embed_dim = 3;
  DecoderConfig dec;
  dec.hidden1 = 6;
  dec.hidden2 = 4;

  auto rel = [](double num, double ana) {
    return std::abs(num - ana) /
           std::max({std::abs(num), std::abs(ana), 1e-6});
  };
  const double h = 1e-5;

  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    ModelBundle b = init_bundle(enc, att, dec, 900 + trial);
    Rng rng(1000 + trial);
    ImageTile tile;
    tile.channels = enc.in_channels;
    tile.height = enc.height;
    tile.width = enc.width;
    tile.values.resize(tile.size());
    for (float& v : tile.values) v = static_cast<float>(rng.normal(0.0, 0.5));
    Vec w(enc.embed_dim), attrs(att.n_attr), wz(att.embed_dim),
        wr(att.n_attr), cond(enc.embed_dim + att.embed_dim);
    for (double& v : w) v = rng.normal();
    for (double& v : attrs) v = rng.normal();
    for (double& v : wz) v = rng.normal();
    for (double& v : wr) v = rng.normal();
    for (double& v : cond) v = rng.normal();

    // encoder
    {
      EncoderCache c;
      encoder_forward(enc, b.params.enc, tile, &c);
      ModelParams g = zero_like(b.params);
      encoder_backward(enc, b.params.enc, c, w, g.enc);
      auto loss = [&] {
        const Embedding z = encoder_forward(enc, b.params.enc, tile);
        double l = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) l += w[i] * z[i];
        return l;
      };
      auto prefs = tensor_refs(b.params);
      auto grefs = tensor_refs(g);
      for (std::size_t k = 0; k < prefs.size(); ++k) {
        if (prefs[k].name.rfind("enc.", 0) != 0) continue;
        for (std::size_t i = 0; i < prefs[k].data->size(); ++i) {
          const double keep = (*prefs[k].data)[i];
          (*prefs[k].data)[i] = keep + h;
          const double up = loss();
          (*prefs[k].data)[i] = keep - h;
          const double dn = loss();
          (*prefs[k].data)[i] = keep;
          worst = std::max(worst,
                           rel((up - dn) / (2 * h), (*grefs[k].data)[i]));
        }
      }
    }
    // attribute autoencoder and decoder
    {
      AttrCache c;
      attr_forward(att, b.params.attr, attrs, c);
      ModelParams g = zero_like(b.params);
      attr_backward(att, b.params.attr, c, wz, wr, g.attr);
      auto loss = [&] {
        AttrCache cc;
        attr_forward(att, b.params.attr, attrs, cc);
        double l = 0.0;
        for (std::size_t i = 0; i < cc.z.size(); ++i) l += wz[i] * cc.z[i];
        for (std::size_t i = 0; i < cc.recon.size(); ++i)
          l += wr[i] * cc.recon[i];
        return l;
      };
      auto prefs = tensor_refs(b.params);
      auto grefs = tensor_refs(g);
      for (std::size_t k = 0; k < prefs.size(); ++k) {
        if (prefs[k].name.rfind("attr.", 0) != 0) continue;
        for (std::size_t i = 0; i < prefs[k].data->size(); ++i) {
          const double keep = (*prefs[k].data)[i];
          (*prefs[k].data)[i] = keep + h;
          const double up = loss();
          (*prefs[k].data)[i] = keep - h;
          const double dn = loss();
          (*prefs[k].data)[i] = keep;
          worst = std::max(worst,
                           rel((up - dn) / (2 * h), (*grefs[k].data)[i]));
        }
      }
    }
    {
      DecoderCache c;
      decode_forward(dec, b.params.dec, cond, &c);
      ModelParams g = zero_like(b.params);
      Vec d_in;
      decode_backward(dec, b.params.dec, c, 1.0, g.dec, d_in);
      auto prefs = tensor_refs(b.params);
      auto grefs = tensor_refs(g);
      for (std::size_t k = 0; k < prefs.size(); ++k) {
        if (prefs[k].name.rfind("dec.", 0) != 0) continue;
        for (std::size_t i = 0; i < prefs[k].data->size(); ++i) {
          const double keep = (*prefs[k].data)[i];
          (*prefs[k].data)[i] = keep + h;
          const double up = decode_forward(dec, b.params.dec, cond);
          (*prefs[k].data)[i] = keep - h;
          const double dn = decode_forward(dec, b.params.dec, cond);
          (*prefs[k].data)[i] = keep;
          worst = std::max(worst,
                           rel((up - dn) / (2 * h), (*grefs[k].data)[i]));
        }
      }
    }
    // mmd2 and contrastive loss w.r.t. their inputs
    {
      PointSet x = random_points(rng, 5, 3), y = random_points(rng, 6, 3);
      const KernelSpec kk = fixed_kernel(1.1);
      PointSet dx, dy;
      mmd2_with_grad(x, y, kk, &dx, &dy);
      for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t c = 0; c < 3; ++c) {
          const double keep = x[i][c];
          x[i][c] = keep + h;
          const double up = mmd2(x, y, kk);
          x[i][c] = keep - h;
          const double dn = mmd2(x, y, kk);
          x[i][c] = keep;
          worst = std::max(worst, rel((up - dn) / (2 * h), dx[i][c]));
        }

      Vec a = random_points(rng, 1, 3)[0], p = random_points(rng, 1, 3)[0],
          n = random_points(rng, 1, 3)[0], da, dp, dn2;
      contrastive_loss_with_grad(a, p, n, da, dp, dn2);
      for (std::size_t i = 0; i < 3; ++i) {
        const double keep = a[i];
        a[i] = keep + h;
        const double up = contrastive_loss(a, p, n);
        a[i] = keep - h;
        const double dn = contrastive_loss(a, p, n);
        a[i] = keep;
        worst = std::max(worst, rel((up - dn) / (2 * h), da[i]));
      }
    }
  }

  std::ostringstream detail;
  detail << "max rel err " << worst;
  report(2, "analytic gradients match finite differences", worst < 1e-4,
         false, detail.str(), t.s());
}

void criterion_3() {
  Timer t;
  Rng rng(300);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec a = random_points(rng, 1, 4)[0];
    const Vec p = random_points(rng, 1, 4)[0];
    const Vec n = random_points(rng, 1, 4)[0];
    worst = std::max(
        worst, std::abs(contrastive_loss(a, a, n) + std::sqrt(sqd(a, n))));
    worst = std::max(worst, std::abs(contrastive_loss(a, p, n) +
                                     contrastive_loss(a, n, p)));
    Vec at = a, pt = p, nt = n;
    for (std::size_t i = 0; i < 4; ++i) {
      at[i] += 3.25;
      pt[i] += 3.25;
      nt[i] += 3.25;
    }
    worst = std::max(worst, std::abs(contrastive_loss(at, pt, nt) -
                                     contrastive_loss(a, p, n)));
  }
  std::ostringstream detail;
  detail << "max deviation " << worst;
  report(3, "contrastive identities (degenerate, swap, translation)",
         worst < 1e-9, false, detail.str(), t.s());
}

// criteria 4 and 5 share one experiment over the spurious-channel benchmark
void criteria_4_5(const Dataset& ds, const CausalSpec& spec) {
  Timer t;
  const TrainConfig base = benchmark_train();
  const auto report45 = run_ood_experiment(
      ds, spec, base,
      {ModelVariant::kCnnSatellite, ModelVariant::kCnnCacm,
       ModelVariant::kCnnContrastive, ModelVariant::kCnnCacmContrastive},
      kSeeds, {"s5"}, jobs());

  const auto cnn = seed_mses(report45, "cnn");
  const auto cacm = seed_mses(report45, "cnn_cacm");
  const auto con = seed_mses(report45, "cnn_contrastive");
  const auto both = seed_mses(report45, "cnn_cacm_contrastive");

  const double med_cnn = median(cnn), med_cacm = median(cacm);
  const double improvement = (med_cnn - med_cacm) / med_cnn;
  std::ostringstream d4;
  d4 << "median cnn " << med_cnn << ", cacm " << med_cacm << ", improvement "
     << improvement * 100.0 << "%";
  report(4, "encoding-space constraints beat the plain backbone out of domain",
         med_cacm < med_cnn && improvement >= 0.20, false, d4.str(), t.s());

  Timer t5;
  int wins = 0;
  for (std::size_t i = 0; i < kSeeds.size(); ++i)
    if (both[i] <= cacm[i] && both[i] <= con[i]) ++wins;
  std::ostringstream d5;
  d5 << "combined best-or-equal in " << wins << "/5 seeds; medians combined "
     << median(both) << ", cacm " << median(cacm) << ", contrastive "
     << median(con);
  report(5, "combined regularizers match or beat each alone (soft)", wins >= 3,
         true, d5.str(), t5.s());
}

void criterion_6(const Dataset&, const CausalSpec&) {
  Timer t;
  // Adaptation setting: learnable signal channels, no spurious shortcut, and
  // a deliberately short main run so the site-level fine-tuning has headroom.
  SynthConfig sc = benchmark_synth(42);
  sc.embed_noise = 0.3;
  sc.confound_strength = 0.3;
  sc.spurious_strength = 0.0;
  auto [ds, gt] = generate_synthetic(sc);
  const CausalSpec& spec = gt.causal_spec;

  TrainConfig base = benchmark_train();
  base.epochs = 20;
  base.finetune_epochs = 150;
  base.finetune_lr = 2e-3;
  base.finetune_with_penalties = false;
  const auto rep = run_domain_adaptation(
      ds, spec, base,
      {FinetuneStrategy::kNone, FinetuneStrategy::kRandom,
       FinetuneStrategy::kClosest},
      {ModelVariant::kCnnCacm}, kSeeds, jobs());

  std::vector<double> none, random_v, closest;
  for (const auto& r : rep.rows) {
    if (r.strategy == "none") none.push_back(r.mse);
    else if (r.strategy == "random") random_v.push_back(r.mse);
    else if (r.strategy == "closest") closest.push_back(r.mse);
  }
  const double m_none = mean_of(none);
  const double m_rand = mean_of(random_v), m_close = mean_of(closest);
  const bool helps = m_rand < m_none && m_close < m_none;
  const bool order = median(closest) <= median(random_v);
  std::ostringstream d;
  d << "mean none " << m_none << ", random " << m_rand << ", closest "
    << m_close << "; medians closest " << median(closest) << " vs random "
    << median(random_v);
  report(6, "fine-tuning helps and closest site is at least as good as random",
         helps && order, false, d.str(), t.s());
}

void criterion_7() {
  Timer t;
  const auto& sites = g2f_sites();
  auto closest = [&](const std::string& code) {
    const SiteId* test = nullptr;
    std::vector<SiteId> rest;
    for (const auto& s : sites) {
      if (s.code == code) test = &s;
      else rest.push_back(s);
    }
    return select_finetune_env(FinetuneStrategy::kClosest, *test, rest, 1)
        .code;
  };
  const bool pass = closest("deh") == "gah" && closest("geh") == "deh" &&
                    closest("iah") == "ilh" && closest("ilh") == "iah" &&
                    closest("gah") == "ilh" && closest("mih") == "ilh";
  std::ostringstream d;
  d << "deh->" << closest("deh") << " geh->" << closest("geh") << " iah->"
    << closest("iah") << " ilh->" << closest("ilh");
  report(7, "haversine closest-site pairs match the study assignment", pass,
         false, d.str(), t.s());
}

void criterion_8(const Dataset& ds, const CausalSpec& spec,
                 const std::string& strongest) {
  Timer t;
  TrainConfig base = benchmark_train();
  base.epochs = 20;
  const SplitPlan plan = make_ood_split(ds, {"s5"});

  int top2 = 0;
  double z_mean_worst = 0.0, z_std_worst = 0.0;
  for (std::uint64_t seed : kSeeds) {
    const auto rep = variable_importance(ds, spec, base, {seed}, plan,
                                         InputMode::kSatellitePlusAttrs,
                                         jobs());
    double mean = 0.0, var = 0.0;
    std::size_t rank = 0;
    for (const auto& r : rep.rows) {
      mean += r.standardized_gain;
      if (r.attribute == strongest) rank = r.rank;
    }
    mean /= static_cast<double>(rep.rows.size());
    for (const auto& r : rep.rows)
      var += (r.standardized_gain - mean) * (r.standardized_gain - mean);
    var /= static_cast<double>(rep.rows.size());
    z_mean_worst = std::max(z_mean_worst, std::abs(mean));
    z_std_worst = std::max(z_std_worst, std::abs(std::sqrt(var) - 1.0));
    if (rank >= 1 && rank <= 2) ++top2;
  }

  std::ostringstream d;
  d << strongest << " in top-2 for " << top2 << "/5 seeds; z mean dev "
    << z_mean_worst << ", z std dev " << z_std_worst;
  report(8, "planted strongest cause ranks top-2 and gains standardize",
         top2 >= 4 && z_mean_worst < 1e-9 && z_std_worst < 1e-9, false,
         d.str(), t.s());
}

void criterion_9() {
  Timer t;
  bool pass = true;
  std::ostringstream d;

  // (a) bitwise reduction to an independently written supervised loop
  {
    SynthConfig sc;
    sc.n_sites = 3;
    sc.samples_per_env = 8;
    sc.tile_size = 8;
    sc.seed = 99;
    auto [raw, gt] = generate_synthetic(sc);
    const SplitPlan plan = make_ood_split(raw, {"s2"});
    const Dataset scaled = min_max_scale(raw, &plan);

    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-3;
    cfg.optimizer = OptimizerKind::kSgd;
    cfg.pretrain_epochs = 0;
    cfg.weights.recon = 0.0;
    cfg.weights.cacm = 0.0;
    cfg.weights.contrastive = 0.0;
    cfg.seed = 17;
    cfg.encoder.height = cfg.encoder.width = 8;
    cfg.encoder.ch1 = 4;
    cfg.encoder.ch2 = 4;
    cfg.encoder.ch3 = 8;
    cfg.encoder.embed_dim = 4;
    cfg.attr.hidden = 6;
    cfg.attr.embed_dim = 3;
    cfg.decoder.hidden1 = 6;
    cfg.decoder.hidden2 = 4;

    auto [b, log] = train(scaled, plan, gt.causal_spec, cfg);

    ModelBundle oracle =
        init_bundle(cfg.encoder, cfg.attr, cfg.decoder, cfg.seed);
    const auto train_idx = samples_in(scaled, plan.train_envs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      Rng shuffle_rng(derive_seed(cfg.seed, 0x5000 + epoch));
      std::vector<std::size_t> order = train_idx;
      shuffle_rng.shuffle(order);
      for (std::size_t s0 = 0; s0 < order.size(); s0 += cfg.batch_size) {
        const std::size_t end = std::min(s0 + cfg.batch_size, order.size());
        const double bs = static_cast<double>(end - s0);
        ModelParams g = zero_like(oracle.params);
        for (std::size_t i = s0; i < end; ++i) {
          const Sample& s = scaled.samples[order[i]];
          EncoderCache ec;
          const Embedding phi =
              encoder_forward(cfg.encoder, oracle.params.enc, s.tile, &ec);
          AttrCache ac;
          attr_forward(cfg.attr, oracle.params.attr, s.attrs, ac);
          DecoderCache dc;
          const double pred = decode_forward(
              cfg.decoder, oracle.params.dec,
              condition(phi, ac.z, cfg.attr.embed_dim), &dc);
          Vec d_cond;
          decode_backward(cfg.decoder, oracle.params.dec, dc,
                          2.0 * (pred - s.om) / bs, g.dec, d_cond);
          encoder_backward(
              cfg.encoder, oracle.params.enc, ec,
              Vec(d_cond.begin(), d_cond.begin() + cfg.encoder.embed_dim),
              g.enc);
          attr_backward(cfg.attr, oracle.params.attr, ac,
                        Vec(d_cond.begin() + cfg.encoder.embed_dim,
                            d_cond.end()),
                        {}, g.attr);
        }
        auto prefs = tensor_refs(oracle.params);
        auto grefs = tensor_refs(g);
        for (std::size_t k = 0; k < prefs.size(); ++k)
          for (std::size_t i = 0; i < prefs[k].data->size(); ++i)
            (*prefs[k].data)[i] -= cfg.learning_rate * (*grefs[k].data)[i];
        round_params_f32(oracle.params);
      }
    }

    auto ra = tensor_refs(b.params);
    auto rb = tensor_refs(oracle.params);
    for (std::size_t k = 0; k < ra.size(); ++k)
      if (*ra[k].data != *rb[k].data) pass = false;
    d << (pass ? "reduction bitwise" : "reduction differs");
  }

  // (b) rerunning the CLI pipeline yields byte-identical reports
  const char* bin = std::getenv("CACMDA_BIN");
  if (bin == nullptr) {
    pass = false;
    d << "; CACMDA_BIN not set";
  } else {
    const fs::path dir = fs::temp_directory_path() / "cacmda_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream cfg(dir / "run.cfg");
    cfg << "synth.n_sites = 3\nsynth.samples_per_env = 6\n"
           "synth.tile_size = 8\ntrain.epochs = 1\ntrain.batch_size = 24\n"
           "train.pretrain_epochs = 0\nencoder.ch1 = 4\nencoder.ch2 = 4\n"
           "encoder.ch3 = 4\nencoder.embed_dim = 4\nattr.hidden = 6\n"
           "attr.embed_dim = 3\ndecoder.hidden1 = 6\ndecoder.hidden2 = 4\n"
           "experiment.seeds = 1,2\n";
    cfg.close();
    auto run = [&](const std::string& args) {
      const std::string c =
          std::string(bin) + " " + args + " >/dev/null 2>&1";
      return WEXITSTATUS(std::system(c.c_str()));
    };
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const std::string base =
        " --config " + (dir / "run.cfg").string() + " --seed 11";
    bool ok = run("synth" + base + " --out " + (dir / "data").string()) == 0;
    for (const char* out : {"e1", "e2"})
      ok = ok &&
           run("eval" + base + " --data " + (dir / "data").string() +
               " --test-sites s2 --models cnn,cnn_cacm --jobs 4 --out " +
               (dir / out).string()) == 0;
    const std::string r1 = slurp(dir / "e1" / "ood_rows.csv");
    if (!ok || r1.empty() || r1 != slurp(dir / "e2" / "ood_rows.csv")) {
      pass = false;
      d << "; cli reports differ or pipeline failed";
    } else {
      d << "; cli reports byte-identical";
    }
  }
  report(9, "zero-weight reduction is bitwise and cli reruns are identical",
         pass, false, d.str(), t.s());
}

void criterion_10(const Dataset& ds, const CausalSpec& spec) {
  Timer t;
  TrainConfig base = benchmark_train();
  bool completed = true;
  double enc_med = 0.0, out_med = 0.0;
  try {
    const auto rep =
        run_cacm_space_ablation(ds, spec, base, kSeeds, {"s5"}, jobs());
    enc_med = median(seed_mses(rep, "cnn_cacm_encoding"));
    out_med = median(seed_mses(rep, "cnn_cacm_output"));
  } catch (const std::exception&) {
    completed = false;
  }
  std::ostringstream d;
  d << "median encoding " << enc_med << ", output " << out_med
    << (enc_med <= out_med ? " (direction holds)" : " (direction reversed)");
  if (!completed) {
    report(10, "encoding- vs output-space ablation completes", false, false,
           "ablation threw", t.s());
    return;
  }
  report(10, "encoding-space no worse than output-space (soft direction)",
         enc_med <= out_med, true, d.str(), t.s());
}

void criterion_11(const Dataset& ds) {
  Timer t;
  bool pass = true;
  std::ostringstream d;

  const fs::path dir = fs::temp_directory_path() / "cacmda_acceptance_rt";
  fs::remove_all(dir);

  // manifest + tiles round trip: payload byte identity
  write_manifest(ds, dir / "a");
  const Dataset back = load_manifest(dir / "a" / "manifest.csv");
  write_manifest(back, dir / "b");
  for (const auto& s : ds.samples) {
    const auto p1 = dir / "a" / "tiles" / (s.id + ".omtl");
    const auto p2 = dir / "b" / "tiles" / (s.id + ".omtl");
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1(std::istreambuf_iterator<char>(f1), {});
    const std::string b2(std::istreambuf_iterator<char>(f2), {});
    if (b1.empty() || b1 != b2) {
      pass = false;
      break;
    }
  }
  std::ifstream m1(dir / "a" / "manifest.csv"),
      m2(dir / "b" / "manifest.csv");
  const std::string s1(std::istreambuf_iterator<char>(m1), {});
  const std::string s2(std::istreambuf_iterator<char>(m2), {});
  if (s1.empty() || s1 != s2) pass = false;
  d << (pass ? "manifest/tile bytes identical" : "manifest/tile differ");

  // bundle round trip: prediction identity on a fixed batch
  TrainConfig cfg = benchmark_train();
  const ModelBundle bundle =
      init_bundle(cfg.encoder, cfg.attr, cfg.decoder, 4242);
  save_bundle(bundle, dir / "m.ommb");
  const ModelBundle loaded = load_bundle(dir / "m.ommb");
  bool preds_ok = true;
  for (std::size_t i = 0; i < std::min<std::size_t>(ds.samples.size(), 32);
       ++i) {
    const Sample& s = ds.samples[i];
    if (predict_om(bundle, s.tile, &s.attrs) !=
            predict_om(loaded, s.tile, &s.attrs) ||
        predict_om(bundle, s.tile, nullptr) !=
            predict_om(loaded, s.tile, nullptr))
      preds_ok = false;
  }
  if (!preds_ok) pass = false;
  d << (preds_ok ? "; bundle predictions identical"
                 : "; bundle predictions differ");

  report(11, "file round trips are lossless", pass, false, d.str(), t.s());
}

}  // namespace

int main() {
  std::cout << "acceptance checks (hardware threads: " << jobs() << ")\n";
  Timer total;

  criterion_1();
  criterion_2();
  criterion_3();
  criterion_7();

  // shared synthetic benchmark for the training-level criteria
  auto [bench, gt] = generate_synthetic(benchmark_synth(1));
  criteria_4_5(bench, gt.causal_spec);
  criterion_6(bench, gt.causal_spec);
  criterion_8(bench, gt.causal_spec, gt.strongest_cause_attr);
  criterion_9();
  criterion_10(bench, gt.causal_spec);
  criterion_11(bench);

  std::cout << (hard_failures == 0 ? "ALL ACCEPTANCE CRITERIA SATISFIED"
                                   : "ACCEPTANCE FAILURES PRESENT")
            << " (total " << std::fixed << std::setprecision(1) << total.s()
            << "s)\n";
  return hard_failures == 0 ? 0 : 1;
}
