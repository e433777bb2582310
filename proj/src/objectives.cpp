#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "cacmda/objectives.hpp"

namespace cacmda {

namespace {

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void check_sets(const PointSet& x, const PointSet& y) {
  if (x.size() < 2 || y.size() < 2)
    throw std::invalid_argument(
        "mmd2: unbiased estimator needs at least 2 points per set");
  const std::size_t dim = x.front().size();
  for (const auto& v : x)
    if (v.size() != dim) throw std::invalid_argument("mmd2: ragged point set");
  for (const auto& v : y)
    if (v.size() != dim)
      throw std::invalid_argument("mmd2: point dimension mismatch");
}

double euclid(const Vec& a, const Vec& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("embedding length mismatch");
  return std::sqrt(sq_dist(a, b));
}

}  // namespace

double resolve_bandwidth(const PointSet& x, const PointSet& y,
                         const KernelSpec& k) {
  if (k.bandwidth == KernelSpec::Bandwidth::kFixed) {
    if (!(k.sigma > 0.0))
      throw std::invalid_argument("kernel: fixed sigma must be > 0");
    return k.sigma;
  }
  PointSet pooled;
  pooled.reserve(x.size() + y.size());
  pooled.insert(pooled.end(), x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  std::vector<double> dists;
  dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j)
      dists.push_back(std::sqrt(sq_dist(pooled[i], pooled[j])));
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                   dists.end());
  const double med = dists[dists.size() / 2];
  // all-coincident points: fall back to sigma = 1
  return med > 0.0 ? med : 1.0;
}

double mmd2(const PointSet& x, const PointSet& y, const KernelSpec& k) {
  return mmd2_with_grad(x, y, k, nullptr, nullptr);
}

double mmd2_with_grad(const PointSet& x, const PointSet& y,
                      const KernelSpec& k, PointSet* dx, PointSet* dy) {
  check_sets(x, y);
  const double sigma = resolve_bandwidth(x, y, k);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  const std::size_t n = x.size(), m = y.size();
  const std::size_t dim = x.front().size();

  if (dx) dx->assign(n, Vec(dim, 0.0));
  if (dy) dy->assign(m, Vec(dim, 0.0));

  const double cxx = 1.0 / (static_cast<double>(n) * (n - 1));
  const double cyy = 1.0 / (static_cast<double>(m) * (m - 1));
  // Equal sample counts use the U-statistic with the paired diagonal left
  // out of the cross term, so identical sets give exactly zero; unequal
  // counts fall back to the full cross sum (both are unbiased).
  const bool drop_diag = n == m;
  const double cxy = drop_diag ? 2.0 / (static_cast<double>(n) * (n - 1))
                               : 2.0 / (static_cast<double>(n) * m);

  // kernel gradient: d/dxi exp(-||xi-xj||^2 / 2s^2) = -k * (xi-xj) / s^2
  auto accum_pair = [&](const Vec& a, const Vec& b, double coeff, Vec* da,
                        Vec* db) {
    const double kv = std::exp(-sq_dist(a, b) * inv2s2);
    if (da || db) {
      const double g = -coeff * kv / (sigma * sigma);
      for (std::size_t t = 0; t < dim; ++t) {
        const double diff = a[t] - b[t];
        if (da) (*da)[t] += g * diff;
        if (db) (*db)[t] -= g * diff;
      }
    }
    return kv;
  };

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      sxx += accum_pair(x[i], x[j], 2.0 * cxx, dx ? &(*dx)[i] : nullptr,
                        dx ? &(*dx)[j] : nullptr);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j)
      syy += accum_pair(y[i], y[j], 2.0 * cyy, dy ? &(*dy)[i] : nullptr,
                        dy ? &(*dy)[j] : nullptr);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      if (drop_diag && i == j) continue;
      sxy += accum_pair(x[i], y[j], -cxy, dx ? &(*dx)[i] : nullptr,
                        dy ? &(*dy)[j] : nullptr);
    }

  return 2.0 * cxx * sxx + 2.0 * cyy * syy - cxy * sxy;
}

namespace {

// Shared helper: one binarized two-group MMD term over a subset of samples.
// Returns false (and records) when a group side is too small.
struct ConstraintAccum {
  PenaltyBreakdown* out;
  const PointSet* points;
  const KernelSpec* kernel;
  std::size_t min_side;
  PointSet* d_points;

  // adds raw estimate to *raw; adds clamped value to *term; the split
  // threshold defaults to the subset mean of the attribute
  void add(const std::vector<std::size_t>& subset,
           const std::vector<double>& attr_values, const std::string& label,
           double* term, double* raw, const double* fixed_mean = nullptr) {
    out->evaluated_constraints++;
    std::vector<std::size_t> lo, hi;
    double mean = 0.0;
    if (fixed_mean) {
      mean = *fixed_mean;
    } else {
      for (double v : attr_values) mean += v;
      mean /= static_cast<double>(attr_values.size());
    }
    for (std::size_t i = 0; i < subset.size(); ++i)
      (attr_values[i] < mean ? lo : hi).push_back(subset[i]);
    if (lo.size() < min_side || hi.size() < min_side) {
      out->skipped_constraints.push_back(label);
      return;
    }
    PointSet x, y;
    x.reserve(lo.size());
    y.reserve(hi.size());
    for (std::size_t i : lo) x.push_back((*points)[i]);
    for (std::size_t i : hi) y.push_back((*points)[i]);
    PointSet dx, dy;
    const double v = mmd2_with_grad(x, y, *kernel, d_points ? &dx : nullptr,
                                    d_points ? &dy : nullptr);
    *raw += v;
    if (v <= 0.0) return;  // clamped: no contribution, no gradient
    *term += v;
    if (d_points) {
      for (std::size_t i = 0; i < lo.size(); ++i)
        for (std::size_t t = 0; t < dx[i].size(); ++t)
          (*d_points)[lo[i]][t] += dx[i][t];
      for (std::size_t i = 0; i < hi.size(); ++i)
        for (std::size_t t = 0; t < dy[i].size(); ++t)
          (*d_points)[hi[i]][t] += dy[i][t];
    }
  }
};

}  // namespace

PenaltyBreakdown cacm_penalty(const PointSet& points,
                              const std::vector<Vec>& attr_rows,
                              const std::vector<std::string>& schema,
                              const std::vector<double>& y,
                              const std::vector<EnvironmentId>& envs,
                              const CausalSpec& spec, const KernelSpec& kernel,
                              CacmSpace space, std::size_t min_group_size,
                              PointSet* d_points) {
  const std::size_t n = points.size();
  if (attr_rows.size() != n || y.size() != n || envs.size() != n)
    throw std::invalid_argument("cacm_penalty: misaligned inputs");
  for (const auto& [name, _] : spec.tags)
    if (std::find(schema.begin(), schema.end(), name) == schema.end())
      throw std::invalid_argument("cacm_penalty: unknown attribute in spec: " +
                                  name);
  (void)space;  // the caller chose which vectors to pass; recorded for logs

  PenaltyBreakdown out;
  if (d_points)
    d_points->assign(n, Vec(n ? points.front().size() : 0, 0.0));
  const std::size_t min_side = std::max<std::size_t>(2, min_group_size);
  ConstraintAccum acc{&out, &points, &kernel, min_side, d_points};

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  auto column = [&](std::size_t col, const std::vector<std::size_t>& subset) {
    std::vector<double> v;
    v.reserve(subset.size());
    for (std::size_t i : subset) v.push_back(attr_rows[i][col]);
    return v;
  };

  for (std::size_t col = 0; col < schema.size(); ++col) {
    const std::string& name = schema[col];
    auto it = spec.tags.find(name);
    if (it == spec.tags.end()) continue;  // explicitly untagged == excluded
    switch (spec.resolve(name)) {
      case CausalTag::kIndependent:
        acc.add(all, column(col, all), "ind:" + name, &out.ind_term,
                &out.ind_raw);
        break;
      case CausalTag::kCausedByY: {
        // condition on y by binning it at the batch mean; the attribute is
        // binarized at its batch mean as well
        double y_mean = 0.0;
        for (double v : y) y_mean += v;
        y_mean /= static_cast<double>(n);
        double a_mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) a_mean += attr_rows[i][col];
        a_mean /= static_cast<double>(n);
        for (int bin = 0; bin < 2; ++bin) {
          std::vector<std::size_t> subset;
          for (std::size_t i = 0; i < n; ++i)
            if ((y[i] < y_mean) == (bin == 0)) subset.push_back(i);
          if (subset.size() < 2 * min_side) {
            out.evaluated_constraints++;
            out.skipped_constraints.push_back(
                "cause:" + name + ":ybin" + std::to_string(bin));
            continue;
          }
          acc.add(subset, column(col, subset),
                  "cause:" + name + ":ybin" + std::to_string(bin),
                  &out.cause_term, &out.cause_raw, &a_mean);
        }
        break;
      }
      case CausalTag::kConfounded: {
        std::map<EnvironmentId, std::vector<std::size_t>> by_env;
        for (std::size_t i = 0; i < n; ++i) by_env[envs[i]].push_back(i);
        for (const auto& [env, subset] : by_env) {
          if (subset.size() < 2 * min_side) {
            out.evaluated_constraints++;
            out.skipped_constraints.push_back("conf:" + name + ":" + env.str());
            continue;
          }
          acc.add(subset, column(col, subset), "conf:" + name + ":" + env.str(),
                  &out.conf_term, &out.conf_raw);
        }
        break;
      }
      case CausalTag::kExcluded:
        break;
      case CausalTag::kCausedAndConfounded:
        break;  // resolve() never returns this
    }
  }
  return out;
}

double contrastive_loss(const Vec& z_a, const Vec& z_p, const Vec& z_n,
                        bool hinge, double margin) {
  const double raw = euclid(z_a, z_p) - euclid(z_a, z_n);
  return hinge ? std::max(0.0, raw + margin) : raw;
}

double contrastive_loss_with_grad(const Vec& z_a, const Vec& z_p,
                                  const Vec& z_n, Vec& d_a, Vec& d_p, Vec& d_n,
                                  bool hinge, double margin) {
  const std::size_t dim = z_a.size();
  d_a.assign(dim, 0.0);
  d_p.assign(dim, 0.0);
  d_n.assign(dim, 0.0);
  const double dp = euclid(z_a, z_p);
  const double dn = euclid(z_a, z_n);
  const double raw = dp - dn;
  if (hinge && raw + margin <= 0.0) return 0.0;
  // subgradient 0 at coincident points
  if (dp > 0.0)
    for (std::size_t t = 0; t < dim; ++t) {
      const double g = (z_a[t] - z_p[t]) / dp;
      d_a[t] += g;
      d_p[t] -= g;
    }
  if (dn > 0.0)
    for (std::size_t t = 0; t < dim; ++t) {
      const double g = (z_a[t] - z_n[t]) / dn;
      d_a[t] -= g;
      d_n[t] += g;
    }
  return hinge ? raw + margin : raw;
}

std::vector<Triplet> sample_pairs(const std::vector<std::size_t>& anchors,
                                  const Dataset& ds,
                                  const std::vector<std::size_t>& candidates,
                                  Rng& rng) {
  std::set<std::string> sites;
  for (std::size_t i : candidates) sites.insert(ds.samples[i].env.site_code);
  if (sites.size() < 2)
    throw std::invalid_argument(
        "sample_pairs: need at least 2 sites among candidates");

  std::vector<Triplet> out;
  out.reserve(anchors.size());
  for (std::size_t a : anchors) {
    const auto& env = ds.samples[a].env;
    std::vector<std::size_t> pos_other_year, pos_same_year, neg;
    for (std::size_t i : candidates) {
      const auto& e = ds.samples[i].env;
      if (e.site_code == env.site_code) {
        if (e.year != env.year)
          pos_other_year.push_back(i);
        else if (i != a)
          pos_same_year.push_back(i);
      } else {
        neg.push_back(i);
      }
    }
    Triplet t;
    t.anchor = a;
    if (!pos_other_year.empty()) {
      t.positive = pos_other_year[rng.index(pos_other_year.size())];
    } else if (!pos_same_year.empty()) {
      t.positive = pos_same_year[rng.index(pos_same_year.size())];
      t.same_year_fallback = true;
    } else {
      t.positive = a;  // singleton site: degenerate positive
      t.same_year_fallback = true;
    }
    t.negative = neg[rng.index(neg.size())];
    out.push_back(t);
  }
  return out;
}

double mse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("mse: length mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double recon_mse(const std::vector<Vec>& recon, const std::vector<Vec>& truth) {
  if (recon.size() != truth.size() || recon.empty())
    throw std::invalid_argument("recon_mse: length mismatch or empty");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    if (recon[i].size() != truth[i].size())
      throw std::invalid_argument("recon_mse: row length mismatch");
    for (std::size_t t = 0; t < recon[i].size(); ++t) {
      const double d = recon[i][t] - truth[i][t];
      s += d * d;
      ++count;
    }
  }
  return s / static_cast<double>(count);
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  if (w.task < 0 || w.recon < 0 || w.cacm < 0 || w.contrastive < 0)
    throw std::invalid_argument("total_loss: weights must be >= 0");
  return w.task * c.task + w.recon * c.recon + w.cacm * c.cacm.total() +
         w.contrastive * c.contrastive;
}

}  // namespace cacmda
