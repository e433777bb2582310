#ifndef CACMDA_OBJECTIVES_HPP_
#define CACMDA_OBJECTIVES_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cacmda/causal.hpp"
#include "cacmda/data.hpp"
#include "cacmda/nets.hpp"
#include "cacmda/rng.hpp"

namespace cacmda {

struct KernelSpec {
  enum class Family { kGaussianRbf };
  enum class Bandwidth { kMedianHeuristic, kFixed };
  Family family = Family::kGaussianRbf;
  Bandwidth bandwidth = Bandwidth::kMedianHeuristic;
  double sigma = 1.0;  // used when bandwidth == kFixed; must be > 0
};

using PointSet = std::vector<Vec>;

// Bandwidth actually used for a pair of sets: the fixed sigma, or the median
// pairwise distance of the pooled samples (sigma = 1 when the median is 0).
double resolve_bandwidth(const PointSet& x, const PointSet& y,
                         const KernelSpec& k);

// Unbiased squared-MMD estimate with a Gaussian RBF kernel. Raw value; may
// be slightly negative. Requires |x| >= 2 and |y| >= 2. Equal sample counts
// use the U-statistic that drops the paired diagonal from the cross term,
// so mmd2(X, X) is exactly zero.
double mmd2(const PointSet& x, const PointSet& y, const KernelSpec& k);

// Same estimate plus gradients w.r.t. every point. The bandwidth is treated
// as a constant. Gradients are accumulated into dx/dy (sized on entry or
// resized here).
double mmd2_with_grad(const PointSet& x, const PointSet& y,
                      const KernelSpec& k, PointSet* dx, PointSet* dy);

enum class CacmSpace { kEncoding, kOutput };

struct PenaltyBreakdown {
  double ind_term = 0.0;    // clamped at 0
  double cause_term = 0.0;
  double conf_term = 0.0;
  double ind_raw = 0.0;     // unclamped estimator sums
  double cause_raw = 0.0;
  double conf_raw = 0.0;
  std::vector<std::string> skipped_constraints;
  std::size_t evaluated_constraints = 0;

  double total() const { return ind_term + cause_term + conf_term; }
};

// Dispatches the three constraint families over the causal tags:
//   independent: MMD between below/above-mean groups of each attribute;
//   caused-by-y: the same, separately within each y-mean group;
//   confounded: the same, separately within each environment (attribute
//   means taken per environment), summed over environments.
// `points` are the working vectors: encoder embeddings for kEncoding, or
// 1-dimensional model outputs for kOutput. A group side smaller than
// max(2, min_group_size) skips that constraint and records it.
// When d_points is non-null, gradients of the clamped penalty w.r.t. the
// points are accumulated into it.
PenaltyBreakdown cacm_penalty(const PointSet& points,
                              const std::vector<Vec>& attr_rows,
                              const std::vector<std::string>& schema,
                              const std::vector<double>& y,
                              const std::vector<EnvironmentId>& envs,
                              const CausalSpec& spec, const KernelSpec& kernel,
                              CacmSpace space, std::size_t min_group_size = 2,
                              PointSet* d_points = nullptr);

// ‖z_a − z_p‖₂ − ‖z_a − z_n‖₂, unclamped. With `hinge`, max(0, raw + margin).
double contrastive_loss(const Vec& z_a, const Vec& z_p, const Vec& z_n,
                        bool hinge = false, double margin = 0.0);
double contrastive_loss_with_grad(const Vec& z_a, const Vec& z_p,
                                  const Vec& z_n, Vec& d_a, Vec& d_p,
                                  Vec& d_n, bool hinge = false,
                                  double margin = 0.0);

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
  bool same_year_fallback = false;  // no other year existed for the site
};

// One triplet per anchor. Positives come from the anchor's site in another
// year (same-year fallback when the site has a single year), negatives from
// a different site; both drawn uniformly from `candidates`.
std::vector<Triplet> sample_pairs(const std::vector<std::size_t>& anchors,
                                  const Dataset& ds,
                                  const std::vector<std::size_t>& candidates,
                                  Rng& rng);

// (mean squared error, mean attribute-reconstruction squared error)
double mse(const std::vector<double>& pred, const std::vector<double>& target);
double recon_mse(const std::vector<Vec>& recon, const std::vector<Vec>& truth);

struct LossComponents {
  double task = 0.0;
  double recon = 0.0;
  PenaltyBreakdown cacm;
  double contrastive = 0.0;
};

struct LossWeights {
  double task = 1.0;
  double recon = 0.1;
  double cacm = 0.1;
  double contrastive = 0.1;
};

double total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace cacmda

#endif  // CACMDA_OBJECTIVES_HPP_
