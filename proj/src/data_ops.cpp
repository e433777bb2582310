#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "cacmda/data.hpp"
#include "cacmda/rng.hpp"

namespace cacmda {

namespace {

MinMaxScaler fit_scaler(double lo, double hi) {
  MinMaxScaler s;
  s.lo = lo;
  s.hi = hi;
  s.constant = !(lo < hi);
  return s;
}

bool contains(const std::vector<EnvironmentId>& envs, const EnvironmentId& e) {
  return std::find(envs.begin(), envs.end(), e) != envs.end();
}

}  // namespace

bool SplitPlan::in_train(const EnvironmentId& e) const {
  return contains(train_envs, e);
}
bool SplitPlan::in_finetune(const EnvironmentId& e) const {
  return contains(finetune_envs, e);
}
bool SplitPlan::in_test(const EnvironmentId& e) const {
  return contains(test_envs, e);
}

Dataset min_max_scale(const Dataset& ds, const SplitPlan* plan,
                      bool fit_on_all) {
  if (ds.samples.empty())
    throw std::invalid_argument("min_max_scale: empty dataset");

  std::vector<std::size_t> fit_idx;
  if (plan != nullptr && !fit_on_all) {
    fit_idx = samples_in(ds, plan->train_envs);
    if (fit_idx.empty())
      throw std::invalid_argument("min_max_scale: split has no train samples");
  } else {
    fit_idx.resize(ds.samples.size());
    for (std::size_t i = 0; i < fit_idx.size(); ++i) fit_idx[i] = i;
  }

  const auto& t0 = ds.samples.front().tile;
  const std::size_t n_ch = t0.channels;
  const std::size_t n_attr = ds.attribute_schema.size();
  const std::size_t px = static_cast<std::size_t>(t0.height) * t0.width;

  DatasetScalers sc;
  sc.tile_channels.resize(n_ch);
  sc.attributes.resize(n_attr);
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> ch_lo(n_ch, inf), ch_hi(n_ch, -inf);
  std::vector<double> at_lo(n_attr, inf), at_hi(n_attr, -inf);
  double om_lo = inf, om_hi = -inf;

  for (std::size_t i : fit_idx) {
    const Sample& s = ds.samples[i];
    for (std::size_t c = 0; c < n_ch; ++c)
      for (std::size_t p = 0; p < px; ++p) {
        double v = s.tile.values[c * px + p];
        ch_lo[c] = std::min(ch_lo[c], v);
        ch_hi[c] = std::max(ch_hi[c], v);
      }
    for (std::size_t a = 0; a < n_attr; ++a) {
      at_lo[a] = std::min(at_lo[a], s.attrs[a]);
      at_hi[a] = std::max(at_hi[a], s.attrs[a]);
    }
    om_lo = std::min(om_lo, s.om);
    om_hi = std::max(om_hi, s.om);
  }
  for (std::size_t c = 0; c < n_ch; ++c)
    sc.tile_channels[c] = fit_scaler(ch_lo[c], ch_hi[c]);
  for (std::size_t a = 0; a < n_attr; ++a)
    sc.attributes[a] = fit_scaler(at_lo[a], at_hi[a]);
  sc.om = fit_scaler(om_lo, om_hi);
  sc.fitted = true;

  return apply_scalers(ds, sc);
}

Dataset apply_scalers(const Dataset& ds, const DatasetScalers& scalers) {
  if (!scalers.fitted)
    throw std::invalid_argument("apply_scalers: scalers not fitted");
  Dataset out = ds;
  const std::size_t px = ds.samples.empty()
                             ? 0
                             : static_cast<std::size_t>(
                                   ds.samples.front().tile.height) *
                                   ds.samples.front().tile.width;
  for (Sample& s : out.samples) {
    for (std::size_t c = 0; c < s.tile.channels; ++c) {
      const auto& k = scalers.tile_channels.at(c);
      for (std::size_t p = 0; p < px; ++p) {
        auto& v = s.tile.values[c * px + p];
        v = static_cast<float>(
            std::clamp(k.scale(static_cast<double>(v)), 0.0, 1.0));
      }
    }
    for (std::size_t a = 0; a < s.attrs.size(); ++a)
      s.attrs[a] = scalers.attributes.at(a).scale(s.attrs[a]);
    s.om = scalers.om.scale(s.om);
  }
  out.scalers = scalers;
  out.scaled = true;
  return out;
}

Dataset inverse_scale(const Dataset& ds) {
  if (!ds.scaled) throw std::invalid_argument("inverse_scale: not scaled");
  Dataset out = ds;
  const std::size_t px = ds.samples.empty()
                             ? 0
                             : static_cast<std::size_t>(
                                   ds.samples.front().tile.height) *
                                   ds.samples.front().tile.width;
  for (Sample& s : out.samples) {
    for (std::size_t c = 0; c < s.tile.channels; ++c) {
      const auto& k = ds.scalers.tile_channels.at(c);
      for (std::size_t p = 0; p < px; ++p) {
        auto& v = s.tile.values[c * px + p];
        v = static_cast<float>(k.unscale(static_cast<double>(v)));
      }
    }
    for (std::size_t a = 0; a < s.attrs.size(); ++a)
      s.attrs[a] = ds.scalers.attributes.at(a).unscale(s.attrs[a]);
    s.om = ds.scalers.om.unscale(s.om);
  }
  out.scaled = false;
  return out;
}

AttributeGroups binarize_attribute(const std::vector<double>& values,
                                   const std::string& name) {
  if (values.empty())
    throw std::invalid_argument("binarize_attribute: empty vector");
  double mean = 0.0;
  for (double v : values) {
    if (!std::isfinite(v))
      throw std::invalid_argument("binarize_attribute: non-finite value");
    mean += v;
  }
  mean /= static_cast<double>(values.size());

  AttributeGroups g;
  g.attribute = name;
  g.labels.resize(values.size());
  std::size_t below = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    // exact mean goes to the at-or-above group
    g.labels[i] = values[i] < mean ? 0 : 1;
    below += g.labels[i] == 0;
  }
  g.degenerate = below == 0 || below == values.size();
  return g;
}

SplitPlan make_ood_split(const Dataset& ds,
                         const std::vector<std::string>& test_site_codes) {
  if (test_site_codes.empty())
    throw std::invalid_argument("make_ood_split: no test sites");
  std::set<std::string> test_set(test_site_codes.begin(),
                                 test_site_codes.end());
  for (const auto& code : test_set) ds.site(code);  // validates existence
  if (test_set.size() >= ds.sites.size())
    throw std::invalid_argument(
        "make_ood_split: test sites cover every site, nothing to train on");

  SplitPlan plan;
  plan.kind = SplitKind::kOod;
  for (const auto& env : ds.environments()) {
    if (test_set.count(env.site_code))
      plan.test_envs.push_back(env);
    else
      plan.train_envs.push_back(env);
  }
  return plan;
}

std::vector<SplitPlan> make_kfold_plans(const Dataset& ds,
                                        FinetuneStrategy strategy,
                                        std::uint64_t seed) {
  const std::size_t k = ds.sites.size();
  if (strategy != FinetuneStrategy::kNone && k < 3)
    throw std::invalid_argument(
        "make_kfold_plans: need at least 3 sites for a fine-tune strategy");
  if (k < 2)
    throw std::invalid_argument("make_kfold_plans: need at least 2 sites");

  std::vector<SplitPlan> plans;
  for (std::size_t fold = 0; fold < k; ++fold) {
    const SiteId& test_site = ds.sites[fold];
    std::vector<SiteId> candidates;
    for (const auto& s : ds.sites)
      if (s.code != test_site.code) candidates.push_back(s);

    std::string finetune_code;
    if (strategy != FinetuneStrategy::kNone) {
      finetune_code = select_finetune_env(strategy, test_site, candidates,
                                          derive_seed(seed, fold))
                          .code;
    }

    SplitPlan plan;
    plan.kind = SplitKind::kKfold;
    for (const auto& env : ds.environments()) {
      if (env.site_code == test_site.code)
        plan.test_envs.push_back(env);
      else if (env.site_code == finetune_code)
        plan.finetune_envs.push_back(env);
      else
        plan.train_envs.push_back(env);
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::vector<std::size_t> samples_in(const Dataset& ds,
                                    const std::vector<EnvironmentId>& envs) {
  std::vector<std::size_t> idx;
  for (const auto& [env, members] : ds.env_index)
    if (contains(envs, env)) idx.insert(idx.end(), members.begin(), members.end());
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace cacmda
