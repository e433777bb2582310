#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cacmda/evaluation.hpp"
#include "cacmda/rng.hpp"

namespace cacmda {

namespace {

// Tile features: per-channel mean and standard deviation. Sensor mode
// appends the attribute vector.
std::vector<double> sample_features(const Sample& s, InputMode mode) {
  std::vector<double> f;
  const std::size_t hw =
      static_cast<std::size_t>(s.tile.height) * s.tile.width;
  f.reserve(2 * s.tile.channels +
            (mode == InputMode::kSatellitePlusAttrs ? s.attrs.size() : 0));
  for (std::uint32_t c = 0; c < s.tile.channels; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < hw; ++i)
      mean += s.tile.values[static_cast<std::size_t>(c) * hw + i];
    mean /= static_cast<double>(hw);
    double var = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double d =
          s.tile.values[static_cast<std::size_t>(c) * hw + i] - mean;
      var += d * d;
    }
    f.push_back(mean);
    f.push_back(std::sqrt(var / static_cast<double>(hw)));
  }
  if (mode == InputMode::kSatellitePlusAttrs)
    f.insert(f.end(), s.attrs.begin(), s.attrs.end());
  return f;
}

struct Node {
  bool leaf = true;
  double value = 0.0;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0, right = 0;  // child node indices
};

struct Tree {
  std::vector<Node> nodes;

  double predict(const std::vector<double>& f) const {
    std::size_t i = 0;
    while (!nodes[i].leaf)
      i = f[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left
                                                    : nodes[i].right;
    return nodes[i].value;
  }
};

double mean_of(const std::vector<double>& y, const std::vector<std::size_t>& idx) {
  double m = 0.0;
  for (std::size_t i : idx) m += y[i];
  return idx.empty() ? 0.0 : m / static_cast<double>(idx.size());
}

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& y;
  std::size_t max_depth;
  std::size_t min_leaf;
  std::size_t mtry;
  Rng& rng;
  Tree tree;

  std::size_t build(std::vector<std::size_t> idx, std::size_t depth) {
    const std::size_t node_id = tree.nodes.size();
    tree.nodes.emplace_back();
    tree.nodes[node_id].value = mean_of(y, idx);
    if (depth >= max_depth || idx.size() < 2 * min_leaf) return node_id;

    // best variance-reduction split over a random feature subset
    const std::size_t p = x[idx[0]].size();
    std::vector<std::size_t> feats(p);
    for (std::size_t i = 0; i < p; ++i) feats[i] = i;
    rng.shuffle(feats);
    feats.resize(std::min(mtry, p));

    double best_score = std::numeric_limits<double>::infinity();
    std::size_t best_feat = 0;
    double best_thr = 0.0;
    std::vector<double> vals(idx.size());
    for (std::size_t feat : feats) {
      for (std::size_t i = 0; i < idx.size(); ++i) vals[i] = x[idx[i]][feat];
      std::vector<std::size_t> order(idx.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(),
                [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });

      // prefix sums over the sorted order give both side SSEs in O(n)
      double sum_r = 0.0, sumsq_r = 0.0;
      for (std::size_t i : order) {
        sum_r += y[idx[i]];
        sumsq_r += y[idx[i]] * y[idx[i]];
      }
      double sum_l = 0.0, sumsq_l = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        const double v = y[idx[order[k]]];
        sum_l += v;
        sumsq_l += v * v;
        sum_r -= v;
        sumsq_r -= v * v;
        if (k + 1 < min_leaf || order.size() - (k + 1) < min_leaf) continue;
        const double a = vals[order[k]], b = vals[order[k + 1]];
        if (a == b) continue;  // cannot separate equal values
        const double nl = static_cast<double>(k + 1);
        const double nr = static_cast<double>(order.size() - (k + 1));
        const double sse =
            (sumsq_l - sum_l * sum_l / nl) + (sumsq_r - sum_r * sum_r / nr);
        if (sse < best_score) {
          best_score = sse;
          best_feat = feat;
          best_thr = 0.5 * (a + b);
        }
      }
    }
    if (!std::isfinite(best_score)) return node_id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : idx)
      (x[i][best_feat] <= best_thr ? left : right).push_back(i);
    if (left.size() < min_leaf || right.size() < min_leaf) return node_id;

    tree.nodes[node_id].leaf = false;
    tree.nodes[node_id].feature = best_feat;
    tree.nodes[node_id].threshold = best_thr;
    const std::size_t l = build(std::move(left), depth + 1);
    tree.nodes[node_id].left = l;
    const std::size_t r = build(std::move(right), depth + 1);
    tree.nodes[node_id].right = r;
    return node_id;
  }
};

}  // namespace

double rf_baseline(const Dataset& ds, const SplitPlan& split, InputMode mode,
                   std::size_t n_trees, std::uint64_t seed,
                   std::size_t max_depth, std::size_t min_leaf) {
  if (n_trees == 0) throw std::invalid_argument("rf_baseline: n_trees == 0");
  const auto train_idx = samples_in(ds, split.train_envs);
  const auto test_idx = samples_in(ds, split.test_envs);
  if (train_idx.empty() || test_idx.empty())
    throw std::invalid_argument("rf_baseline: empty train or test split");

  std::vector<std::vector<double>> x_train, x_test;
  std::vector<double> y_train, y_test;
  for (std::size_t i : train_idx) {
    x_train.push_back(sample_features(ds.samples[i], mode));
    y_train.push_back(ds.samples[i].om);
  }
  for (std::size_t i : test_idx) {
    x_test.push_back(sample_features(ds.samples[i], mode));
    y_test.push_back(ds.samples[i].om);
  }

  const std::size_t n = x_train.size();
  const std::size_t p = x_train[0].size();
  const std::size_t mtry = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::sqrt(static_cast<double>(p))));

  std::vector<Tree> forest;
  forest.reserve(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    Rng rng(derive_seed(seed, 0xf000 + t));
    std::vector<std::size_t> idx(n);
    if (max_depth == 0) {
      // single leaf over the full training set: the exact train-mean predictor
      for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    } else {
      for (std::size_t i = 0; i < n; ++i) idx[i] = rng.index(n);  // bootstrap
    }
    TreeBuilder builder{x_train, y_train, max_depth, min_leaf, mtry, rng, {}};
    builder.build(std::move(idx), 0);
    forest.push_back(std::move(builder.tree));
  }

  std::vector<double> preds(x_test.size(), 0.0);
  for (std::size_t i = 0; i < x_test.size(); ++i) {
    for (const Tree& t : forest) preds[i] += t.predict(x_test[i]);
    preds[i] /= static_cast<double>(n_trees);
  }
  return mse(preds, y_test);
}

}  // namespace cacmda
