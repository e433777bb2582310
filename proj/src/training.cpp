#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cacmda/training.hpp"

namespace cacmda {

namespace {

// ---- optimizer ------------------------------------------------------------

template <typename Params>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double momentum, Params& ref)
      : kind_(kind), momentum_(momentum) {
    for (auto& t : tensor_refs(ref)) {
      m_.emplace_back(t.data->size(), 0.0);
      v_.emplace_back(t.data->size(), 0.0);
    }
  }

  void step(Params& p, Params& g, double lr) {
    ++t_;
    auto prefs = tensor_refs(p);
    auto grefs = tensor_refs(g);
    for (std::size_t k = 0; k < prefs.size(); ++k) {
      Vec& w = *prefs[k].data;
      Vec& gr = *grefs[k].data;
      switch (kind_) {
        case OptimizerKind::kSgd:
          for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gr[i];
          break;
        case OptimizerKind::kSgdMomentum:
          for (std::size_t i = 0; i < w.size(); ++i) {
            m_[k][i] = momentum_ * m_[k][i] + gr[i];
            w[i] -= lr * m_[k][i];
          }
          break;
        case OptimizerKind::kAdaptiveMoment: {
          constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
          for (std::size_t i = 0; i < w.size(); ++i) {
            m_[k][i] = b1 * m_[k][i] + (1.0 - b1) * gr[i];
            v_[k][i] = b2 * v_[k][i] + (1.0 - b2) * gr[i] * gr[i];
            w[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps);
          }
          break;
        }
      }
      std::fill(gr.begin(), gr.end(), 0.0);
    }
    round_params_f32(p);
  }

 private:
  OptimizerKind kind_;
  double momentum_;
  std::size_t t_ = 0;
  std::vector<Vec> m_, v_;
};

// ---- per-sample forward state ---------------------------------------------

struct ForwardState {
  EncoderCache enc;
  Embedding phi;
  AttrCache attr;
  bool has_attr = false;
  DecoderCache dec;
  double pred = 0.0;
};

void forward_sample(const ModelBundle& b, const Sample& s, bool use_attrs,
                    ForwardState& st) {
  st.phi = encoder_forward(b.enc_cfg, b.params.enc, s.tile, &st.enc);
  Vec z;
  st.has_attr = use_attrs;
  if (use_attrs) {
    attr_forward(b.attr_cfg, b.params.attr, s.attrs, st.attr);
    z = st.attr.z;
  }
  const Embedding cond = condition(st.phi, z, b.attr_cfg.embed_dim);
  st.pred = decode_forward(b.dec_cfg, b.params.dec, cond, &st.dec);
}

struct EpochStats {
  double mse_sum = 0.0, recon_sum = 0.0, ind_sum = 0.0, cause_sum = 0.0,
         conf_sum = 0.0, con_sum = 0.0;
  std::size_t batches = 0;
  std::size_t evaluated = 0, skipped = 0;
};

struct LoopContext {
  ModelBundle* bundle;
  const Dataset* ds;
  const CausalSpec* spec;
  const TrainConfig* cfg;
  std::vector<std::size_t> train_idx;
  Optimizer<ModelParams>* opt;
  Rng* pair_rng;
  TrainLog* log;
  std::chrono::steady_clock::time_point start;
  bool attrs_in_model = false;     // conditioning active
  bool contrastive_active = false;
};

double elapsed_s(const LoopContext& ctx) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                       ctx.start)
      .count();
}

// One gradient step over `batch`. `with_cacm`/`with_recon`/`with_contrastive`
// select the active terms; task MSE is always on.
void batch_step(LoopContext& ctx, const std::vector<std::size_t>& batch,
                bool with_cacm, bool with_recon, bool with_contrastive,
                double lr, EpochStats& stats) {
  ModelBundle& b = *ctx.bundle;
  const Dataset& ds = *ctx.ds;
  const TrainConfig& cfg = *ctx.cfg;
  const std::size_t bs = batch.size();
  const std::uint32_t d = b.enc_cfg.embed_dim;
  const std::uint32_t d_a = b.attr_cfg.embed_dim;

  std::vector<ForwardState> st(bs);
  std::vector<double> preds(bs), targets(bs);
  for (std::size_t i = 0; i < bs; ++i) {
    forward_sample(b, ds.samples[batch[i]], ctx.attrs_in_model, st[i]);
    preds[i] = st[i].pred;
    targets[i] = ds.samples[batch[i]].om;
  }
  stats.mse_sum += mse(preds, targets);

  // CACM penalty over the batch
  PointSet d_points;
  PenaltyBreakdown pb;
  if (with_cacm) {
    PointSet points(bs);
    std::vector<Vec> attr_rows(bs);
    std::vector<double> y(bs);
    std::vector<EnvironmentId> envs(bs);
    for (std::size_t i = 0; i < bs; ++i) {
      points[i] = cfg.cacm_space == CacmSpace::kEncoding ? st[i].phi
                                                         : Vec{st[i].pred};
      attr_rows[i] = ds.samples[batch[i]].attrs;
      y[i] = targets[i];
      envs[i] = ds.samples[batch[i]].env;
    }
    pb = cacm_penalty(points, attr_rows, ds.attribute_schema, y, envs,
                      *ctx.spec, cfg.kernel, cfg.cacm_space,
                      cfg.min_group_size, &d_points);
    stats.ind_sum += pb.ind_term;
    stats.cause_sum += pb.cause_term;
    stats.conf_sum += pb.conf_term;
    stats.evaluated += pb.evaluated_constraints;
    stats.skipped += pb.skipped_constraints.size();
  }

  ModelParams grads = zero_like(b.params);
  for (std::size_t i = 0; i < bs; ++i) {
    double d_pred =
        cfg.weights.task * 2.0 * (preds[i] - targets[i]) / static_cast<double>(bs);
    if (with_cacm && cfg.cacm_space == CacmSpace::kOutput)
      d_pred += cfg.weights.cacm * d_points[i][0];

    Vec d_cond;
    decode_backward(b.dec_cfg, b.params.dec, st[i].dec, d_pred, grads.dec,
                    d_cond);
    Vec d_phi(d_cond.begin(), d_cond.begin() + d);
    if (with_cacm && cfg.cacm_space == CacmSpace::kEncoding)
      for (std::uint32_t t = 0; t < d; ++t)
        d_phi[t] += cfg.weights.cacm * d_points[i][t];
    encoder_backward(b.enc_cfg, b.params.enc, st[i].enc, d_phi, grads.enc);

    if (st[i].has_attr) {
      Vec d_z(d_cond.begin() + d, d_cond.end());
      Vec d_recon;
      if (with_recon) {
        const auto& attrs = ds.samples[batch[i]].attrs;
        d_recon.resize(attrs.size());
        const double scale =
            cfg.weights.recon * 2.0 /
            (static_cast<double>(bs) * static_cast<double>(attrs.size()));
        double rsum = 0.0;
        for (std::size_t t = 0; t < attrs.size(); ++t) {
          const double diff = st[i].attr.recon[t] - attrs[t];
          d_recon[t] = scale * diff;
          rsum += diff * diff;
        }
        stats.recon_sum += rsum / (static_cast<double>(bs) *
                                   static_cast<double>(attrs.size()));
      }
      attr_backward(b.attr_cfg, b.params.attr, st[i].attr, d_z, d_recon,
                    grads.attr);
    }
  }

  if (with_contrastive) {
    const auto triplets =
        sample_pairs(batch, ds, ctx.train_idx, *ctx.pair_rng);
    const double inv_n = 1.0 / static_cast<double>(triplets.size());
    double con_sum = 0.0;
    for (const auto& t : triplets) {
      AttrCache ca, cp, cn;
      attr_forward(b.attr_cfg, b.params.attr, ds.samples[t.anchor].attrs, ca);
      attr_forward(b.attr_cfg, b.params.attr, ds.samples[t.positive].attrs,
                   cp);
      attr_forward(b.attr_cfg, b.params.attr, ds.samples[t.negative].attrs,
                   cn);
      Vec da, dp, dn;
      con_sum += contrastive_loss_with_grad(ca.z, cp.z, cn.z, da, dp, dn,
                                            cfg.contrastive_hinge,
                                            cfg.contrastive_margin);
      const double scale = cfg.weights.contrastive * inv_n;
      for (auto& v : da) v *= scale;
      for (auto& v : dp) v *= scale;
      for (auto& v : dn) v *= scale;
      attr_backward(b.attr_cfg, b.params.attr, ca, da, {}, grads.attr);
      attr_backward(b.attr_cfg, b.params.attr, cp, dp, {}, grads.attr);
      attr_backward(b.attr_cfg, b.params.attr, cn, dn, {}, grads.attr);

      if (cfg.contrastive_on_image) {
        EncoderCache ea, ep, en;
        const Embedding fa = encoder_forward(b.enc_cfg, b.params.enc,
                                             ds.samples[t.anchor].tile, &ea);
        const Embedding fp = encoder_forward(b.enc_cfg, b.params.enc,
                                             ds.samples[t.positive].tile, &ep);
        const Embedding fn = encoder_forward(b.enc_cfg, b.params.enc,
                                             ds.samples[t.negative].tile, &en);
        Vec ga, gp, gn;
        con_sum +=
            contrastive_loss_with_grad(fa, fp, fn, ga, gp, gn,
                                       cfg.contrastive_hinge,
                                       cfg.contrastive_margin);
        for (auto& v : ga) v *= scale;
        for (auto& v : gp) v *= scale;
        for (auto& v : gn) v *= scale;
        encoder_backward(b.enc_cfg, b.params.enc, ea, ga, grads.enc);
        encoder_backward(b.enc_cfg, b.params.enc, ep, gp, grads.enc);
        encoder_backward(b.enc_cfg, b.params.enc, en, gn, grads.enc);
      }
    }
    stats.con_sum += con_sum * inv_n;
  }

  ctx.opt->step(b.params, grads, lr);
  ++stats.batches;
}

void push_log_row(LoopContext& ctx, std::size_t epoch, const std::string& stage,
                  const EpochStats& s) {
  if (!ctx.log) return;
  const double nb = s.batches ? static_cast<double>(s.batches) : 1.0;
  TrainLogRow row;
  row.epoch = epoch;
  row.stage = stage;
  row.mse = s.mse_sum / nb;
  row.recon = s.recon_sum / nb;
  row.ind = s.ind_sum / nb;
  row.cause = s.cause_sum / nb;
  row.conf = s.conf_sum / nb;
  row.contrastive = s.con_sum / nb;
  const auto& w = ctx.cfg->weights;
  row.total = w.task * row.mse + w.recon * row.recon +
              w.cacm * (row.ind + row.cause + row.conf) +
              w.contrastive * row.contrastive;
  row.wall_seconds = elapsed_s(ctx);
  ctx.log->rows.push_back(std::move(row));
}

void check_degenerate_rate(const EpochStats& s) {
  if (s.evaluated == 0) return;
  const double rate =
      static_cast<double>(s.skipped) / static_cast<double>(s.evaluated);
  if (rate > 0.5) {
    std::ostringstream os;
    os << "cacm penalty: " << s.skipped << "/" << s.evaluated
       << " constraint evaluations degenerate (" << rate * 100.0
       << "%), batch too small for the configured min group size";
    throw std::runtime_error(os.str());
  }
}

void run_epochs(LoopContext& ctx, std::size_t epochs, double lr) {
  const TrainConfig& cfg = *ctx.cfg;
  const bool with_cacm = cfg.weights.cacm > 0.0;
  const bool with_recon = cfg.weights.recon > 0.0 && ctx.attrs_in_model;
  const bool with_con = cfg.weights.contrastive > 0.0 && ctx.contrastive_active;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5000 + epoch));
    std::vector<std::size_t> order = ctx.train_idx;
    shuffle_rng.shuffle(order);

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::vector<std::size_t> batch(
          order.begin() + static_cast<std::ptrdiff_t>(i),
          order.begin() + static_cast<std::ptrdiff_t>(
                              std::min(i + cfg.batch_size, order.size())));
      batches.push_back(std::move(batch));
    }

    if (cfg.schedule == Schedule::kJoint) {
      EpochStats stats;
      for (const auto& batch : batches)
        batch_step(ctx, batch, with_cacm, with_recon, with_con, lr, stats);
      check_degenerate_rate(stats);
      push_log_row(ctx, epoch, "joint", stats);
    } else {
      EpochStats a;
      for (const auto& batch : batches)
        batch_step(ctx, batch, with_cacm, with_recon, false, lr, a);
      check_degenerate_rate(a);
      push_log_row(ctx, epoch, "A", a);
      if (with_con) {
        EpochStats bstats;
        for (const auto& batch : batches)
          batch_step(ctx, batch, false, false, true, lr, bstats);
        push_log_row(ctx, epoch, "B", bstats);
      }
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs >= 1");
  if (batch_size < 4 * min_group_size)
    throw std::invalid_argument(
        "train config: batch_size must be >= 4 * min_group_size");
  if (!(learning_rate > 0.0) || !(finetune_lr > 0.0))
    throw std::invalid_argument("train config: learning rates must be > 0");
  if (weights.task < 0 || weights.recon < 0 || weights.cacm < 0 ||
      weights.contrastive < 0)
    throw std::invalid_argument("train config: weights must be >= 0");
}

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kSgdMomentum: return "sgd_momentum";
    case OptimizerKind::kAdaptiveMoment: return "adaptive_moment";
  }
  return "?";
}
std::string to_string(Schedule s) {
  return s == Schedule::kBilevelAlternate ? "bilevel_alternate" : "joint";
}
std::string to_string(InputMode m) {
  return m == InputMode::kSatelliteOnly ? "satellite_only"
                                        : "satellite_plus_attrs";
}
std::string to_string(CacmSpace s) {
  return s == CacmSpace::kEncoding ? "encoding" : "output";
}

std::string config_string(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "epochs=" << cfg.epochs << "\nbatch_size=" << cfg.batch_size
     << "\nlearning_rate=" << cfg.learning_rate
     << "\noptimizer=" << to_string(cfg.optimizer)
     << "\nmomentum=" << cfg.momentum << "\nlambda_task=" << cfg.weights.task
     << "\nlambda_recon=" << cfg.weights.recon
     << "\nlambda_cacm=" << cfg.weights.cacm
     << "\nlambda_con=" << cfg.weights.contrastive
     << "\nschedule=" << to_string(cfg.schedule)
     << "\ncacm_space=" << to_string(cfg.cacm_space) << "\nkernel_sigma="
     << (cfg.kernel.bandwidth == KernelSpec::Bandwidth::kFixed
             ? std::to_string(cfg.kernel.sigma)
             : std::string("median"))
     << "\nmin_group_size=" << cfg.min_group_size << "\nseed=" << cfg.seed
     << "\nfinetune_epochs=" << cfg.finetune_epochs
     << "\nfinetune_lr=" << cfg.finetune_lr
     << "\nfinetune_with_penalties=" << cfg.finetune_with_penalties
     << "\ninput_mode=" << to_string(cfg.input_mode)
     << "\ncontrastive_on_image=" << cfg.contrastive_on_image
     << "\ncontrastive_hinge=" << cfg.contrastive_hinge
     << "\ncontrastive_margin=" << cfg.contrastive_margin
     << "\npretrain_epochs=" << cfg.pretrain_epochs
     << "\nenc=" << cfg.encoder.in_channels << "x" << cfg.encoder.height << "x"
     << cfg.encoder.width << "/" << cfg.encoder.ch1 << "," << cfg.encoder.ch2
     << "," << cfg.encoder.ch3 << "->" << cfg.encoder.embed_dim
     << "\nattr=" << cfg.attr.n_attr << "/" << cfg.attr.hidden << "->"
     << cfg.attr.embed_dim << "\ndec=" << cfg.decoder.hidden1 << ","
     << cfg.decoder.hidden2 << "\n";
  return os.str();
}

std::string config_hash(const TrainConfig& cfg) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config_string(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot write train log: " + path.string());
  out << "# seed=" << seed << " config=" << config_hash << "\n";
  out << "epoch,stage,mse,recon,ind,cause,conf,contrastive,total,wall_seconds"
      << "\n";
  out.precision(12);
  for (const auto& r : rows)
    out << r.epoch << "," << r.stage << "," << r.mse << "," << r.recon << ","
        << r.ind << "," << r.cause << "," << r.conf << "," << r.contrastive
        << "," << r.total << "," << r.wall_seconds << "\n";
}

ModelBundle pretrain_encoder(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.samples.empty())
    throw std::invalid_argument("pretrain_encoder: empty dataset");
  ModelBundle b =
      init_bundle(cfg.encoder, cfg.attr, cfg.decoder, cfg.seed);
  if (cfg.pretrain_epochs == 0) return b;

  ReconParams head = init_recon(cfg.encoder, cfg.seed);
  Optimizer<ModelParams> opt_model(cfg.optimizer, cfg.momentum, b.params);
  Optimizer<ReconParams> opt_head(cfg.optimizer, cfg.momentum, head);

  const std::size_t n_px = b.enc_cfg.in_channels * b.enc_cfg.height *
                           static_cast<std::size_t>(b.enc_cfg.width);
  for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, 0x9000 + epoch));
    std::vector<std::size_t> order(ds.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      const double bs = static_cast<double>(end - start);
      ModelParams g_model = zero_like(b.params);
      ReconParams g_head = zero_like(head);
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = ds.samples[order[k]];
        EncoderCache ec;
        const Embedding e =
            encoder_forward(b.enc_cfg, b.params.enc, s.tile, &ec);
        ReconCache rc;
        const Vec& recon = recon_forward(b.enc_cfg, head, e, rc);
        Vec d_out(n_px);
        const double scale = 2.0 / (bs * static_cast<double>(n_px));
        for (std::size_t t = 0; t < n_px; ++t)
          d_out[t] = scale * (recon[t] - static_cast<double>(s.tile.values[t]));
        Vec d_embed;
        recon_backward(b.enc_cfg, head, rc, d_out, g_head, d_embed);
        encoder_backward(b.enc_cfg, b.params.enc, ec, d_embed, g_model.enc);
      }
      opt_model.step(b.params, g_model, cfg.learning_rate);
      opt_head.step(head, g_head, cfg.learning_rate);
    }
  }
  return b;  // reconstruction head discarded
}

std::pair<ModelBundle, TrainLog> train(const Dataset& ds,
                                       const SplitPlan& split,
                                       const CausalSpec& spec,
                                       const TrainConfig& cfg,
                                       const ModelBundle* init) {
  cfg.validate();
  std::vector<std::size_t> train_idx = samples_in(ds, split.train_envs);
  if (train_idx.empty())
    throw std::invalid_argument("train: split has no training samples");

  ModelBundle bundle;
  if (init) {
    bundle = *init;
  } else if (cfg.pretrain_epochs > 0) {
    // reconstruction pretraining sees training environments only
    Dataset pre;
    pre.attribute_schema = ds.attribute_schema;
    pre.sites = ds.sites;
    for (std::size_t i : train_idx) pre.samples.push_back(ds.samples[i]);
    pre.rebuild_index();
    bundle = pretrain_encoder(pre, cfg);
  } else {
    bundle = init_bundle(cfg.encoder, cfg.attr, cfg.decoder, cfg.seed);
  }

  TrainLog log;
  log.seed = cfg.seed;
  log.config_hash = cacmda::config_hash(cfg);

  Optimizer<ModelParams> opt(cfg.optimizer, cfg.momentum, bundle.params);
  Rng pair_rng(derive_seed(cfg.seed, 0x777));

  std::set<std::string> train_sites;
  for (std::size_t i : train_idx)
    train_sites.insert(ds.samples[i].env.site_code);

  LoopContext ctx;
  ctx.bundle = &bundle;
  ctx.ds = &ds;
  ctx.spec = &spec;
  ctx.cfg = &cfg;
  ctx.train_idx = std::move(train_idx);
  ctx.opt = &opt;
  ctx.pair_rng = &pair_rng;
  ctx.log = &log;
  ctx.start = std::chrono::steady_clock::now();
  ctx.attrs_in_model = cfg.input_mode == InputMode::kSatellitePlusAttrs;
  ctx.contrastive_active =
      cfg.weights.contrastive > 0.0 && train_sites.size() >= 2;
  if (cfg.weights.contrastive > 0.0 && !ctx.contrastive_active)
    log.notes.push_back("contrastive term dropped: fewer than 2 train sites");

  run_epochs(ctx, cfg.epochs, cfg.learning_rate);
  return {std::move(bundle), std::move(log)};
}

ModelBundle finetune(const ModelBundle& bundle, const Dataset& ds,
                     const std::vector<EnvironmentId>& env_set,
                     const CausalSpec& spec, const TrainConfig& cfg,
                     TrainLog* log) {
  cfg.validate();
  if (env_set.empty())
    throw std::invalid_argument("finetune: empty environment set");
  std::vector<std::size_t> idx = samples_in(ds, env_set);
  if (idx.empty())
    throw std::invalid_argument("finetune: no samples in environment set");

  ModelBundle out = bundle;
  if (cfg.finetune_epochs == 0) return out;

  TrainConfig ft_cfg = cfg;
  if (!cfg.finetune_with_penalties) {
    ft_cfg.weights.recon = 0.0;
    ft_cfg.weights.cacm = 0.0;
    ft_cfg.weights.contrastive = 0.0;
  }

  Optimizer<ModelParams> opt(ft_cfg.optimizer, ft_cfg.momentum, out.params);
  Rng pair_rng(derive_seed(ft_cfg.seed, 0x778));

  std::set<std::string> sites;
  for (std::size_t i : idx) sites.insert(ds.samples[i].env.site_code);

  LoopContext ctx;
  ctx.bundle = &out;
  ctx.ds = &ds;
  ctx.spec = &spec;
  ctx.cfg = &ft_cfg;
  ctx.train_idx = std::move(idx);
  ctx.opt = &opt;
  ctx.pair_rng = &pair_rng;
  ctx.log = log;
  ctx.start = std::chrono::steady_clock::now();
  ctx.attrs_in_model = ft_cfg.input_mode == InputMode::kSatellitePlusAttrs;
  ctx.contrastive_active =
      ft_cfg.weights.contrastive > 0.0 && sites.size() >= 2;
  if (log && ft_cfg.weights.contrastive > 0.0 && !ctx.contrastive_active)
    log->notes.push_back(
        "finetune: contrastive term dropped, single-site environment set");

  run_epochs(ctx, ft_cfg.finetune_epochs, ft_cfg.finetune_lr);
  return out;
}

}  // namespace cacmda
