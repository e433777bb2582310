#include <cmath>

#include "doctest.h"

#include "cacmda/objectives.hpp"
#include "cacmda/rng.hpp"
#include "cacmda/synth.hpp"

using namespace cacmda;

namespace {

PointSet random_points(Rng& rng, std::size_t n, std::size_t d) {
  PointSet out(n, Vec(d));
  for (auto& p : out)
    for (double& v : p) v = rng.normal();
  return out;
}

double sqdist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// independent double-loop implementation of the unbiased estimator; equal
// sample counts drop the paired diagonal from the cross term
double mmd2_brute(const PointSet& x, const PointSet& y, double sigma) {
  auto k = [&](const Vec& a, const Vec& b) {
    return std::exp(-sqdist(a, b) / (2.0 * sigma * sigma));
  };
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  const bool equal = x.size() == y.size();
  double xx = 0.0, yy = 0.0, xy = 0.0;
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

}  // namespace

TEST_CASE("mmd2 hand-computed case") {
  // X = {0,0}, Y = {1,1}, sigma = 1: 1 + 1 - 2 e^{-1/2}
  const PointSet x = {{0.0}, {0.0}};
  const PointSet y = {{1.0}, {1.0}};
  const double expected = 2.0 - 2.0 * std::exp(-0.5);
  CHECK(mmd2(x, y, fixed_kernel(1.0)) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mmd2 matches the brute-force oracle on random instances") {
  Rng rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    CAPTURE(trial);
    const std::size_t n = 2 + rng.index(49);
    const std::size_t m = 2 + rng.index(49);
    const std::size_t d = 1 + rng.index(16);
    const PointSet x = random_points(rng, n, d);
    const PointSet y = random_points(rng, m, d);
    const double sigma = 0.5 + rng.uniform();
    CHECK(std::abs(mmd2(x, y, fixed_kernel(sigma)) - mmd2_brute(x, y, sigma)) <
          1e-10);
  }
}

TEST_CASE("mmd2 properties") {
  Rng rng(7);
  const PointSet x = random_points(rng, 12, 4);
  const PointSet y = random_points(rng, 9, 4);
  const KernelSpec k = fixed_kernel(1.3);

  SUBCASE("identical sets give zero") {
    CHECK(std::abs(mmd2(x, x, k)) < 1e-9);
  }
  SUBCASE("symmetry") {
    CHECK(mmd2(x, y, k) == doctest::Approx(mmd2(y, x, k)).epsilon(1e-12));
  }
  SUBCASE("translation invariance") {
    PointSet xs = x, ys = y;
    for (auto& p : xs) p[2] += 5.0;
    for (auto& p : ys) p[2] += 5.0;
    CHECK(mmd2(xs, ys, k) == doctest::Approx(mmd2(x, y, k)).epsilon(1e-9));
  }
  SUBCASE("singleton sets rejected") {
    CHECK_THROWS(mmd2({{1.0}}, y, k));
  }
}

TEST_CASE("median heuristic bandwidth") {
  // pooled pairwise distances of {0, 1, 3}: 1, 3, 2 -> median 2
  const PointSet x = {{0.0}, {1.0}};
  const PointSet y = {{3.0}};
  KernelSpec k;  // median heuristic by default
  CHECK(resolve_bandwidth(x, y, k) == doctest::Approx(2.0));

  // all-identical points: zero median falls back to sigma = 1
  const PointSet z = {{5.0}, {5.0}};
  const PointSet w = {{5.0}};
  CHECK(resolve_bandwidth(z, w, k) == doctest::Approx(1.0));
}

TEST_CASE("mmd2 gradients match finite differences") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    PointSet x = random_points(rng, 4 + rng.index(4), 3);
    PointSet y = random_points(rng, 4 + rng.index(4), 3);
    const KernelSpec k = fixed_kernel(0.8 + rng.uniform());

    PointSet dx, dy;
    mmd2_with_grad(x, y, k, &dx, &dy);

    const double h = 1e-6;
    double worst = 0.0;
    auto check_set = [&](PointSet& s, const PointSet& grad) {
      for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t c = 0; c < s[i].size(); ++c) {
          const double keep = s[i][c];
          s[i][c] = keep + h;
          const double up = mmd2(x, y, k);
          s[i][c] = keep - h;
          const double dn = mmd2(x, y, k);
          s[i][c] = keep;
          const double num = (up - dn) / (2 * h);
          const double denom =
              std::max({std::abs(num), std::abs(grad[i][c]), 1e-6});
          worst = std::max(worst, std::abs(num - grad[i][c]) / denom);
        }
    };
    check_set(x, dx);
    check_set(y, dy);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("contrastive loss identities") {
  SUBCASE("hand case") {
    CHECK(contrastive_loss({0, 0}, {1, 0}, {0, 2}) == doctest::Approx(-1.0));
  }
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    CAPTURE(trial);
    const Vec a = random_points(rng, 1, 4)[0];
    const Vec p = random_points(rng, 1, 4)[0];
    const Vec n = random_points(rng, 1, 4)[0];

    // anchor == positive leaves only the negative distance
    double neg = 0.0;
    for (std::size_t i = 0; i < 4; ++i) neg += (a[i] - n[i]) * (a[i] - n[i]);
    CHECK(contrastive_loss(a, a, n) == doctest::Approx(-std::sqrt(neg)).epsilon(1e-9));

    // swapping positive and negative flips the sign
    CHECK(contrastive_loss(a, p, n) ==
          doctest::Approx(-contrastive_loss(a, n, p)).epsilon(1e-9));

    // translation invariance
    Vec at = a, pt = p, nt = n;
    for (std::size_t i = 0; i < 4; ++i) {
      at[i] += 2.5;
      pt[i] += 2.5;
      nt[i] += 2.5;
    }
    CHECK(contrastive_loss(at, pt, nt) ==
          doctest::Approx(contrastive_loss(a, p, n)).epsilon(1e-9));
  }
}

TEST_CASE("contrastive hinge clamps at zero") {
  const Vec a = {0.0}, p = {2.0}, n = {1.0};
  CHECK(contrastive_loss(a, p, n) == doctest::Approx(1.0));
  CHECK(contrastive_loss(a, p, n, true) == doctest::Approx(1.0));
  // raw -1 with margin 0.5 hinges to 0
  CHECK(contrastive_loss(a, n, p, true, 0.5) == doctest::Approx(0.0));
  CHECK(contrastive_loss(a, p, n, true, 0.5) == doctest::Approx(1.5));
}

TEST_CASE("contrastive gradients match finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    Vec a = random_points(rng, 1, 3)[0];
    Vec p = random_points(rng, 1, 3)[0];
    Vec n = random_points(rng, 1, 3)[0];
    Vec da, dp, dn;
    contrastive_loss_with_grad(a, p, n, da, dp, dn);

    const double h = 1e-6;
    double worst = 0.0;
    auto check_vec = [&](Vec& v, const Vec& grad) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double keep = v[i];
        v[i] = keep + h;
        const double up = contrastive_loss(a, p, n);
        v[i] = keep - h;
        const double dn_ = contrastive_loss(a, p, n);
        v[i] = keep;
        const double num = (up - dn_) / (2 * h);
        const double denom = std::max({std::abs(num), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, std::abs(num - grad[i]) / denom);
      }
    };
    check_vec(a, da);
    check_vec(p, dp);
    check_vec(n, dn);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("cacm penalty dispatches by tag and clamps at zero") {
  // two environments, one attribute per class
  CausalSpec spec;
  spec.tags = {{"ind", CausalTag::kIndependent},
               {"cause", CausalTag::kCausedByY},
               {"conf", CausalTag::kConfounded}};
  const std::vector<std::string> schema = {"cause", "conf", "ind"};

  Rng rng(19);
  const std::size_t n = 40;
  PointSet points = random_points(rng, n, 3);
  std::vector<Vec> attrs(n, Vec(3));
  std::vector<double> y(n);
  std::vector<EnvironmentId> envs(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform();
    for (double& a : attrs[i]) a = rng.normal();
    envs[i] = {i % 2 == 0 ? "e0" : "e1", 2020};
  }

  const KernelSpec kernel = fixed_kernel(1.0);
  const PenaltyBreakdown pb =
      cacm_penalty(points, attrs, schema, y, envs, spec, kernel,
                   CacmSpace::kEncoding);
  CHECK(pb.ind_term >= 0.0);
  CHECK(pb.cause_term >= 0.0);
  CHECK(pb.conf_term >= 0.0);
  CHECK(pb.total() ==
        doctest::Approx(pb.ind_term + pb.cause_term + pb.conf_term));
  CHECK(pb.evaluated_constraints > 0);

  SUBCASE("excluded attributes contribute nothing") {
    CausalSpec excl = spec;
    excl.tags["ind"] = CausalTag::kExcluded;
    const PenaltyBreakdown pb2 =
        cacm_penalty(points, attrs, schema, y, envs, excl, kernel,
                     CacmSpace::kEncoding);
    CHECK(pb2.ind_term == 0.0);
    CHECK(pb2.cause_term == doctest::Approx(pb.cause_term));
    CHECK(pb2.conf_term == doctest::Approx(pb.conf_term));
  }

  SUBCASE("independent term is the mmd between attribute groups") {
    CausalSpec only;
    only.tags = {{"ind", CausalTag::kIndependent},
                 {"cause", CausalTag::kExcluded},
                 {"conf", CausalTag::kExcluded}};
    const PenaltyBreakdown pb3 =
        cacm_penalty(points, attrs, schema, y, envs, only, kernel,
                     CacmSpace::kEncoding);
    // oracle: split on the attribute mean, compute mmd2 directly
    double mean = 0.0;
    for (const auto& a : attrs) mean += a[2];
    mean /= static_cast<double>(n);
    PointSet lo, hi;
    for (std::size_t i = 0; i < n; ++i)
      (attrs[i][2] < mean ? lo : hi).push_back(points[i]);
    const double expected = std::max(0.0, mmd2(lo, hi, kernel));
    CHECK(pb3.ind_term == doctest::Approx(expected).epsilon(1e-10));
  }

  SUBCASE("small groups are skipped and recorded") {
    // constant attribute: every sample lands at-or-above the mean
    std::vector<Vec> flat = attrs;
    for (auto& a : flat) a[2] = 1.0;
    const PenaltyBreakdown pb4 =
        cacm_penalty(points, flat, schema, y, envs, spec, kernel,
                     CacmSpace::kEncoding);
    CHECK(pb4.ind_term == 0.0);
    CHECK_FALSE(pb4.skipped_constraints.empty());
  }
}

TEST_CASE("cacm penalty gradients match finite differences") {
  CausalSpec spec;
  spec.tags = {{"ind", CausalTag::kIndependent},
               {"cause", CausalTag::kCausedByY},
               {"conf", CausalTag::kConfounded}};
  const std::vector<std::string> schema = {"cause", "conf", "ind"};

  Rng rng(23);
  const std::size_t n = 24;
  PointSet points = random_points(rng, n, 2);
  std::vector<Vec> attrs(n, Vec(3));
  std::vector<double> y(n);
  std::vector<EnvironmentId> envs(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.uniform();
    for (double& a : attrs[i]) a = rng.normal();
    envs[i] = {i % 2 == 0 ? "e0" : "e1", 2020};
  }
  const KernelSpec kernel = fixed_kernel(1.2);

  PointSet grad;
  cacm_penalty(points, attrs, schema, y, envs, spec, kernel,
               CacmSpace::kEncoding, 2, &grad);
  REQUIRE(grad.size() == n);

  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      const double keep = points[i][c];
      points[i][c] = keep + h;
      const double up = cacm_penalty(points, attrs, schema, y, envs, spec,
                                     kernel, CacmSpace::kEncoding)
                            .total();
      points[i][c] = keep - h;
      const double dn = cacm_penalty(points, attrs, schema, y, envs, spec,
                                     kernel, CacmSpace::kEncoding)
                            .total();
      points[i][c] = keep;
      const double num = (up - dn) / (2 * h);
      const double denom = std::max({std::abs(num), std::abs(grad[i][c]), 1e-6});
      worst = std::max(worst, std::abs(num - grad[i][c]) / denom);
    }
  CHECK(worst < 1e-4);
}

TEST_CASE("triplet sampling uses other years and other sites") {
  auto [ds, gt] = generate_synthetic([] {
    SynthConfig cfg;
    cfg.n_sites = 3;
    cfg.samples_per_env = 5;
    cfg.tile_size = 8;
    cfg.seed = 29;
    return cfg;
  }());

  std::vector<std::size_t> all(ds.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  Rng rng(31);
  const auto triplets = sample_pairs(all, ds, all, rng);
  REQUIRE(triplets.size() == all.size());
  for (const auto& t : triplets) {
    const auto& a = ds.samples[t.anchor];
    const auto& p = ds.samples[t.positive];
    const auto& n = ds.samples[t.negative];
    CHECK(a.env.site_code == p.env.site_code);
    if (!t.same_year_fallback) CHECK(a.env.year != p.env.year);
    CHECK(a.env.site_code != n.env.site_code);
  }

  // single-site candidate pools cannot give negatives
  std::vector<std::size_t> one_site;
  for (std::size_t i : all)
    if (ds.samples[i].env.site_code == "s0") one_site.push_back(i);
  CHECK_THROWS(sample_pairs(one_site, ds, one_site, rng));
}

TEST_CASE("mse and total loss combine as documented") {
  CHECK(mse({1.0, 2.0}, {1.0, 4.0}) == doctest::Approx(2.0));
  LossComponents c;
  c.task = 0.5;
  c.recon = 0.2;
  c.cacm.ind_term = 1.0;
  c.contrastive = -0.3;
  LossWeights w;
  w.task = 1.0;
  w.recon = 0.5;
  w.cacm = 2.0;
  w.contrastive = 0.1;
  CHECK(total_loss(c, w) == doctest::Approx(0.5 + 0.1 + 2.0 - 0.03));
}
