#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cacmda/nets.hpp"
#include "cacmda/rng.hpp"

namespace cacmda {

namespace {

// ---- primitive layers -----------------------------------------------------

void conv3x3_forward(const Conv2d& c, const double* in, std::uint32_t h,
                     std::uint32_t w, double* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::uint32_t oc = 0; oc < c.out_c; ++oc) {
    const double* wk = &c.w[static_cast<std::size_t>(oc) * c.in_c * 9];
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint32_t x = 0; x < w; ++x) {
        double acc = c.b[oc];
        for (std::uint32_t ic = 0; ic < c.in_c; ++ic) {
          const double* plane_in = in + ic * plane;
          const double* k = wk + ic * 9;
          for (int ky = -1; ky <= 1; ++ky) {
            const int yy = static_cast<int>(y) + ky;
            if (yy < 0 || yy >= static_cast<int>(h)) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              const int xx = static_cast<int>(x) + kx;
              if (xx < 0 || xx >= static_cast<int>(w)) continue;
              acc += k[(ky + 1) * 3 + (kx + 1)] *
                     plane_in[static_cast<std::size_t>(yy) * w + xx];
            }
          }
        }
        out[oc * plane + static_cast<std::size_t>(y) * w + x] = acc;
      }
    }
  }
}

void conv3x3_backward(const Conv2d& c, const double* in, std::uint32_t h,
                      std::uint32_t w, const double* dout, Conv2d& grad,
                      double* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::uint32_t oc = 0; oc < c.out_c; ++oc) {
    const double* wk = &c.w[static_cast<std::size_t>(oc) * c.in_c * 9];
    double* gwk = &grad.w[static_cast<std::size_t>(oc) * c.in_c * 9];
    for (std::uint32_t y = 0; y < h; ++y) {
      for (std::uint32_t x = 0; x < w; ++x) {
        const double g = dout[oc * plane + static_cast<std::size_t>(y) * w + x];
        if (g == 0.0) continue;
        grad.b[oc] += g;
        for (std::uint32_t ic = 0; ic < c.in_c; ++ic) {
          const double* plane_in = in + ic * plane;
          const double* k = wk + ic * 9;
          double* gk = gwk + ic * 9;
          double* plane_din = din ? din + ic * plane : nullptr;
          for (int ky = -1; ky <= 1; ++ky) {
            const int yy = static_cast<int>(y) + ky;
            if (yy < 0 || yy >= static_cast<int>(h)) continue;
            for (int kx = -1; kx <= 1; ++kx) {
              const int xx = static_cast<int>(x) + kx;
              if (xx < 0 || xx >= static_cast<int>(w)) continue;
              const std::size_t ii = static_cast<std::size_t>(yy) * w + xx;
              gk[(ky + 1) * 3 + (kx + 1)] += g * plane_in[ii];
              if (plane_din) plane_din[ii] += g * k[(ky + 1) * 3 + (kx + 1)];
            }
          }
        }
      }
    }
  }
}

void relu_inplace(Vec& v) {
  for (double& x : v)
    if (x < 0.0) x = 0.0;
}

// d *= (activation > 0), where `act` holds post-ReLU values
void relu_backward_inplace(const Vec& act, Vec& d) {
  for (std::size_t i = 0; i < d.size(); ++i)
    if (act[i] <= 0.0) d[i] = 0.0;
}

void maxpool2_forward(const double* in, std::uint32_t c, std::uint32_t h,
                      std::uint32_t w, double* out, std::uint32_t* idx) {
  const std::uint32_t oh = h / 2, ow = w / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
  for (std::uint32_t ch = 0; ch < c; ++ch) {
    for (std::uint32_t y = 0; y < oh; ++y) {
      for (std::uint32_t x = 0; x < ow; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * y * w + 2 * x);
        double bv = in[ch * plane + best];
        for (std::uint32_t dy = 0; dy < 2; ++dy)
          for (std::uint32_t dx = 0; dx < 2; ++dx) {
            const std::uint32_t ii = (2 * y + dy) * w + 2 * x + dx;
            if (in[ch * plane + ii] > bv) {
              bv = in[ch * plane + ii];
              best = ii;
            }
          }
        out[ch * oplane + static_cast<std::size_t>(y) * ow + x] = bv;
        idx[ch * oplane + static_cast<std::size_t>(y) * ow + x] = best;
      }
    }
  }
}

void maxpool2_backward(const double* dout, std::uint32_t c, std::uint32_t h,
                       std::uint32_t w, const std::uint32_t* idx,
                       double* din) {
  const std::uint32_t oh = h / 2, ow = w / 2;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
  for (std::uint32_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < oplane; ++i)
      din[ch * plane + idx[ch * oplane + i]] += dout[ch * oplane + i];
}

void upsample2_forward(const double* in, std::uint32_t c, std::uint32_t h,
                       std::uint32_t w, double* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::uint32_t oh = 2 * h, ow = 2 * w;
  const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
  for (std::uint32_t ch = 0; ch < c; ++ch)
    for (std::uint32_t y = 0; y < oh; ++y)
      for (std::uint32_t x = 0; x < ow; ++x)
        out[ch * oplane + static_cast<std::size_t>(y) * ow + x] =
            in[ch * plane + static_cast<std::size_t>(y / 2) * w + x / 2];
}

void upsample2_backward(const double* dout, std::uint32_t c, std::uint32_t h,
                        std::uint32_t w, double* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::uint32_t oh = 2 * h, ow = 2 * w;
  const std::size_t oplane = static_cast<std::size_t>(oh) * ow;
  for (std::uint32_t ch = 0; ch < c; ++ch)
    for (std::uint32_t y = 0; y < oh; ++y)
      for (std::uint32_t x = 0; x < ow; ++x)
        din[ch * plane + static_cast<std::size_t>(y / 2) * w + x / 2] +=
            dout[ch * oplane + static_cast<std::size_t>(y) * ow + x];
}

void linear_forward(const Linear& l, const double* in, double* out) {
  for (std::uint32_t o = 0; o < l.out; ++o) {
    double acc = l.b[o];
    const double* w = &l.w[static_cast<std::size_t>(o) * l.in];
    for (std::uint32_t i = 0; i < l.in; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
}

void linear_backward(const Linear& l, const double* in, const double* dout,
                     Linear& grad, double* din) {
  for (std::uint32_t o = 0; o < l.out; ++o) {
    const double g = dout[o];
    if (g == 0.0) continue;
    grad.b[o] += g;
    const double* w = &l.w[static_cast<std::size_t>(o) * l.in];
    double* gw = &grad.w[static_cast<std::size_t>(o) * l.in];
    for (std::uint32_t i = 0; i < l.in; ++i) {
      gw[i] += g * in[i];
      if (din) din[i] += g * w[i];
    }
  }
}

// ---- construction ---------------------------------------------------------

Conv2d make_conv(std::uint32_t in_c, std::uint32_t out_c) {
  Conv2d c;
  c.in_c = in_c;
  c.out_c = out_c;
  c.w.assign(static_cast<std::size_t>(out_c) * in_c * 9, 0.0);
  c.b.assign(out_c, 0.0);
  return c;
}

Linear make_linear(std::uint32_t in, std::uint32_t out) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w.assign(static_cast<std::size_t>(out) * in, 0.0);
  l.b.assign(out, 0.0);
  return l;
}

void init_conv(Conv2d& c, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.in_c) * 9.0);
  for (double& v : c.w) v = rng.uniform(-bound, bound);
  for (double& v : c.b) v = rng.uniform(-bound, bound);
}

void init_linear(Linear& l, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
  for (double& v : l.w) v = rng.uniform(-bound, bound);
  for (double& v : l.b) v = rng.uniform(-bound, bound);
}

}  // namespace

void EncoderConfig::validate() const {
  if (in_channels < 1 || ch1 < 1 || ch2 < 1 || ch3 < 1)
    throw std::invalid_argument("encoder config: channel counts must be >= 1");
  if (embed_dim < 2)
    throw std::invalid_argument("encoder config: embed_dim must be >= 2");
  if (height % 8 != 0 || width % 8 != 0 || height == 0 || width == 0)
    throw std::invalid_argument(
        "encoder config: spatial dims must be positive multiples of 8");
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  auto conv_dims = [](const Conv2d& c) {
    return std::vector<std::uint32_t>{c.out_c, c.in_c, 3, 3};
  };
  auto lin_dims = [](const Linear& l) {
    return std::vector<std::uint32_t>{l.out, l.in};
  };
  return {
      {"enc.c1.w", conv_dims(p.enc.c1), &p.enc.c1.w},
      {"enc.c1.b", {p.enc.c1.out_c}, &p.enc.c1.b},
      {"enc.c2.w", conv_dims(p.enc.c2), &p.enc.c2.w},
      {"enc.c2.b", {p.enc.c2.out_c}, &p.enc.c2.b},
      {"enc.c3.w", conv_dims(p.enc.c3), &p.enc.c3.w},
      {"enc.c3.b", {p.enc.c3.out_c}, &p.enc.c3.b},
      {"enc.proj.w", lin_dims(p.enc.proj), &p.enc.proj.w},
      {"enc.proj.b", {p.enc.proj.out}, &p.enc.proj.b},
      {"attr.e1.w", lin_dims(p.attr.e1), &p.attr.e1.w},
      {"attr.e1.b", {p.attr.e1.out}, &p.attr.e1.b},
      {"attr.e2.w", lin_dims(p.attr.e2), &p.attr.e2.w},
      {"attr.e2.b", {p.attr.e2.out}, &p.attr.e2.b},
      {"attr.d1.w", lin_dims(p.attr.d1), &p.attr.d1.w},
      {"attr.d1.b", {p.attr.d1.out}, &p.attr.d1.b},
      {"attr.d2.w", lin_dims(p.attr.d2), &p.attr.d2.w},
      {"attr.d2.b", {p.attr.d2.out}, &p.attr.d2.b},
      {"dec.f1.w", lin_dims(p.dec.f1), &p.dec.f1.w},
      {"dec.f1.b", {p.dec.f1.out}, &p.dec.f1.b},
      {"dec.f2.w", lin_dims(p.dec.f2), &p.dec.f2.w},
      {"dec.f2.b", {p.dec.f2.out}, &p.dec.f2.b},
      {"dec.f3.w", lin_dims(p.dec.f3), &p.dec.f3.w},
      {"dec.f3.b", {p.dec.f3.out}, &p.dec.f3.b},
  };
}

std::vector<TensorRef> tensor_refs(ReconParams& p) {
  auto conv_dims = [](const Conv2d& c) {
    return std::vector<std::uint32_t>{c.out_c, c.in_c, 3, 3};
  };
  return {
      {"recon.up.w", {p.up.out, p.up.in}, &p.up.w},
      {"recon.up.b", {p.up.out}, &p.up.b},
      {"recon.r1.w", conv_dims(p.r1), &p.r1.w},
      {"recon.r1.b", {p.r1.out_c}, &p.r1.b},
      {"recon.r2.w", conv_dims(p.r2), &p.r2.w},
      {"recon.r2.b", {p.r2.out_c}, &p.r2.b},
      {"recon.r3.w", conv_dims(p.r3), &p.r3.w},
      {"recon.r3.b", {p.r3.out_c}, &p.r3.b},
  };
}

ModelBundle init_bundle(const EncoderConfig& enc, const AttrConfig& attr,
                        const DecoderConfig& dec, std::uint64_t seed) {
  enc.validate();
  ModelBundle b;
  b.enc_cfg = enc;
  b.attr_cfg = attr;
  b.dec_cfg = dec;
  b.seed = seed;

  b.params.enc.c1 = make_conv(enc.in_channels, enc.ch1);
  b.params.enc.c2 = make_conv(enc.ch1, enc.ch2);
  b.params.enc.c3 = make_conv(enc.ch2, enc.ch3);
  b.params.enc.proj = make_linear(enc.flat_dim(), enc.embed_dim);
  b.params.attr.e1 = make_linear(attr.n_attr, attr.hidden);
  b.params.attr.e2 = make_linear(attr.hidden, attr.embed_dim);
  b.params.attr.d1 = make_linear(attr.embed_dim, attr.hidden);
  b.params.attr.d2 = make_linear(attr.hidden, attr.n_attr);
  b.params.dec.f1 =
      make_linear(enc.embed_dim + attr.embed_dim, dec.hidden1);
  b.params.dec.f2 = make_linear(dec.hidden1, dec.hidden2);
  b.params.dec.f3 = make_linear(dec.hidden2, 1);

  Rng rng(derive_seed(seed, 0xbeef));
  init_conv(b.params.enc.c1, rng);
  init_conv(b.params.enc.c2, rng);
  init_conv(b.params.enc.c3, rng);
  init_linear(b.params.enc.proj, rng);
  init_linear(b.params.attr.e1, rng);
  init_linear(b.params.attr.e2, rng);
  init_linear(b.params.attr.d1, rng);
  init_linear(b.params.attr.d2, rng);
  init_linear(b.params.dec.f1, rng);
  init_linear(b.params.dec.f2, rng);
  init_linear(b.params.dec.f3, rng);
  round_params_f32(b.params);
  return b;
}

ModelParams zero_like(const ModelParams& p) {
  ModelParams g = p;
  for (auto& t : tensor_refs(g)) std::fill(t.data->begin(), t.data->end(), 0.0);
  return g;
}

ReconParams init_recon(const EncoderConfig& enc, std::uint64_t seed) {
  ReconParams r;
  r.up = make_linear(enc.embed_dim, enc.flat_dim());
  r.r1 = make_conv(enc.ch3, enc.ch2);
  r.r2 = make_conv(enc.ch2, enc.ch1);
  r.r3 = make_conv(enc.ch1, enc.in_channels);
  Rng rng(derive_seed(seed, 0xdead));
  init_linear(r.up, rng);
  init_conv(r.r1, rng);
  init_conv(r.r2, rng);
  init_conv(r.r3, rng);
  round_params_f32(r);
  return r;
}

ReconParams zero_like(const ReconParams& p) {
  ReconParams g = p;
  for (auto& t : tensor_refs(g)) std::fill(t.data->begin(), t.data->end(), 0.0);
  return g;
}

Embedding encoder_forward(const EncoderConfig& cfg, const EncoderParams& p,
                          const ImageTile& tile, EncoderCache* cache) {
  if (tile.channels != cfg.in_channels || tile.height != cfg.height ||
      tile.width != cfg.width)
    throw std::invalid_argument("encoder_forward: tile dims do not match config");

  EncoderCache local;
  EncoderCache& c = cache ? *cache : local;
  const std::uint32_t h = cfg.height, w = cfg.width;

  c.in.assign(tile.values.begin(), tile.values.end());
  c.a1.resize(static_cast<std::size_t>(cfg.ch1) * h * w);
  conv3x3_forward(p.c1, c.in.data(), h, w, c.a1.data());
  relu_inplace(c.a1);
  c.p1.resize(static_cast<std::size_t>(cfg.ch1) * (h / 2) * (w / 2));
  c.i1.resize(c.p1.size());
  maxpool2_forward(c.a1.data(), cfg.ch1, h, w, c.p1.data(), c.i1.data());

  c.a2.resize(static_cast<std::size_t>(cfg.ch2) * (h / 2) * (w / 2));
  conv3x3_forward(p.c2, c.p1.data(), h / 2, w / 2, c.a2.data());
  relu_inplace(c.a2);
  c.p2.resize(static_cast<std::size_t>(cfg.ch2) * (h / 4) * (w / 4));
  c.i2.resize(c.p2.size());
  maxpool2_forward(c.a2.data(), cfg.ch2, h / 2, w / 2, c.p2.data(),
                   c.i2.data());

  c.a3.resize(static_cast<std::size_t>(cfg.ch3) * (h / 4) * (w / 4));
  conv3x3_forward(p.c3, c.p2.data(), h / 4, w / 4, c.a3.data());
  relu_inplace(c.a3);
  c.p3.resize(cfg.flat_dim());
  c.i3.resize(c.p3.size());
  maxpool2_forward(c.a3.data(), cfg.ch3, h / 4, w / 4, c.p3.data(),
                   c.i3.data());

  Embedding e(cfg.embed_dim);
  linear_forward(p.proj, c.p3.data(), e.data());
  return e;
}

void encoder_backward(const EncoderConfig& cfg, const EncoderParams& p,
                      const EncoderCache& c, const Vec& d_embed,
                      EncoderParams& grad) {
  const std::uint32_t h = cfg.height, w = cfg.width;
  Vec d_p3(c.p3.size(), 0.0);
  linear_backward(p.proj, c.p3.data(), d_embed.data(), grad.proj,
                  d_p3.data());

  Vec d_a3(c.a3.size(), 0.0);
  maxpool2_backward(d_p3.data(), cfg.ch3, h / 4, w / 4, c.i3.data(),
                    d_a3.data());
  relu_backward_inplace(c.a3, d_a3);
  Vec d_p2(c.p2.size(), 0.0);
  conv3x3_backward(p.c3, c.p2.data(), h / 4, w / 4, d_a3.data(), grad.c3,
                   d_p2.data());

  Vec d_a2(c.a2.size(), 0.0);
  maxpool2_backward(d_p2.data(), cfg.ch2, h / 2, w / 2, c.i2.data(),
                    d_a2.data());
  relu_backward_inplace(c.a2, d_a2);
  Vec d_p1(c.p1.size(), 0.0);
  conv3x3_backward(p.c2, c.p1.data(), h / 2, w / 2, d_a2.data(), grad.c2,
                   d_p1.data());

  Vec d_a1(c.a1.size(), 0.0);
  maxpool2_backward(d_p1.data(), cfg.ch1, h, w, c.i1.data(), d_a1.data());
  relu_backward_inplace(c.a1, d_a1);
  conv3x3_backward(p.c1, c.in.data(), h, w, d_a1.data(), grad.c1, nullptr);
}

void attr_forward(const AttrConfig& cfg, const AttrParams& p, const Vec& attrs,
                  AttrCache& c) {
  if (attrs.size() != cfg.n_attr)
    throw std::invalid_argument("attr_forward: attribute count mismatch");
  c.in = attrs;
  c.h1.resize(cfg.hidden);
  linear_forward(p.e1, c.in.data(), c.h1.data());
  relu_inplace(c.h1);
  c.z.resize(cfg.embed_dim);
  linear_forward(p.e2, c.h1.data(), c.z.data());
  c.h2.resize(cfg.hidden);
  linear_forward(p.d1, c.z.data(), c.h2.data());
  relu_inplace(c.h2);
  c.recon.resize(cfg.n_attr);
  linear_forward(p.d2, c.h2.data(), c.recon.data());
}

void attr_backward(const AttrConfig& cfg, const AttrParams& p,
                   const AttrCache& c, const Vec& dz, const Vec& drecon,
                   AttrParams& grad) {
  Vec dz_total = dz.empty() ? Vec(cfg.embed_dim, 0.0) : dz;
  if (!drecon.empty()) {
    Vec d_h2(cfg.hidden, 0.0);
    linear_backward(p.d2, c.h2.data(), drecon.data(), grad.d2, d_h2.data());
    relu_backward_inplace(c.h2, d_h2);
    linear_backward(p.d1, c.z.data(), d_h2.data(), grad.d1, dz_total.data());
  }
  Vec d_h1(cfg.hidden, 0.0);
  linear_backward(p.e2, c.h1.data(), dz_total.data(), grad.e2, d_h1.data());
  relu_backward_inplace(c.h1, d_h1);
  linear_backward(p.e1, c.in.data(), d_h1.data(), grad.e1, nullptr);
}

Embedding condition(const Embedding& phi, const Vec& z, std::uint32_t d_a) {
  Embedding out;
  out.reserve(phi.size() + d_a);
  out.insert(out.end(), phi.begin(), phi.end());
  if (z.empty()) {
    out.resize(phi.size() + d_a, 0.0);
  } else {
    if (z.size() != d_a)
      throw std::invalid_argument("condition: attribute embedding length");
    out.insert(out.end(), z.begin(), z.end());
  }
  return out;
}

double decode_forward(const DecoderConfig& cfg, const DecoderParams& p,
                      const Vec& conditioned, DecoderCache* cache) {
  if (conditioned.size() != p.f1.in)
    throw std::invalid_argument("decode_forward: embedding length mismatch");
  DecoderCache local;
  DecoderCache& c = cache ? *cache : local;
  c.in = conditioned;
  c.h1.resize(cfg.hidden1);
  linear_forward(p.f1, c.in.data(), c.h1.data());
  relu_inplace(c.h1);
  c.h2.resize(cfg.hidden2);
  linear_forward(p.f2, c.h1.data(), c.h2.data());
  relu_inplace(c.h2);
  double out = 0.0;
  linear_forward(p.f3, c.h2.data(), &out);
  c.out = out;
  return out;
}

void decode_backward(const DecoderConfig& cfg, const DecoderParams& p,
                     const DecoderCache& c, double d_out, DecoderParams& grad,
                     Vec& d_in) {
  Vec d_h2(cfg.hidden2, 0.0);
  linear_backward(p.f3, c.h2.data(), &d_out, grad.f3, d_h2.data());
  relu_backward_inplace(c.h2, d_h2);
  Vec d_h1(cfg.hidden1, 0.0);
  linear_backward(p.f2, c.h1.data(), d_h2.data(), grad.f2, d_h1.data());
  relu_backward_inplace(c.h1, d_h1);
  d_in.assign(c.in.size(), 0.0);
  linear_backward(p.f1, c.in.data(), d_h1.data(), grad.f1, d_in.data());
}

Vec recon_forward(const EncoderConfig& cfg, const ReconParams& p,
                  const Embedding& embed, ReconCache& c) {
  const std::uint32_t h8 = cfg.pooled_h(), w8 = cfg.pooled_w();
  c.embed = embed;
  c.u.resize(cfg.flat_dim());
  linear_forward(p.up, c.embed.data(), c.u.data());
  relu_inplace(c.u);

  c.s1.resize(static_cast<std::size_t>(cfg.ch3) * (h8 * 2) * (w8 * 2));
  upsample2_forward(c.u.data(), cfg.ch3, h8, w8, c.s1.data());
  c.a1.resize(static_cast<std::size_t>(cfg.ch2) * (h8 * 2) * (w8 * 2));
  conv3x3_forward(p.r1, c.s1.data(), h8 * 2, w8 * 2, c.a1.data());
  relu_inplace(c.a1);

  c.s2.resize(static_cast<std::size_t>(cfg.ch2) * (h8 * 4) * (w8 * 4));
  upsample2_forward(c.a1.data(), cfg.ch2, h8 * 2, w8 * 2, c.s2.data());
  c.a2.resize(static_cast<std::size_t>(cfg.ch1) * (h8 * 4) * (w8 * 4));
  conv3x3_forward(p.r2, c.s2.data(), h8 * 4, w8 * 4, c.a2.data());
  relu_inplace(c.a2);

  c.s3.resize(static_cast<std::size_t>(cfg.ch1) * cfg.height * cfg.width);
  upsample2_forward(c.a2.data(), cfg.ch1, h8 * 4, w8 * 4, c.s3.data());
  c.out.resize(static_cast<std::size_t>(cfg.in_channels) * cfg.height *
               cfg.width);
  conv3x3_forward(p.r3, c.s3.data(), cfg.height, cfg.width, c.out.data());
  return c.out;
}

void recon_backward(const EncoderConfig& cfg, const ReconParams& p,
                    const ReconCache& c, const Vec& d_out, ReconParams& grad,
                    Vec& d_embed) {
  const std::uint32_t h8 = cfg.pooled_h(), w8 = cfg.pooled_w();
  Vec d_s3(c.s3.size(), 0.0);
  conv3x3_backward(p.r3, c.s3.data(), cfg.height, cfg.width, d_out.data(),
                   grad.r3, d_s3.data());
  Vec d_a2(c.a2.size(), 0.0);
  upsample2_backward(d_s3.data(), cfg.ch1, h8 * 4, w8 * 4, d_a2.data());
  relu_backward_inplace(c.a2, d_a2);

  Vec d_s2(c.s2.size(), 0.0);
  conv3x3_backward(p.r2, c.s2.data(), h8 * 4, w8 * 4, d_a2.data(), grad.r2,
                   d_s2.data());
  Vec d_a1(c.a1.size(), 0.0);
  upsample2_backward(d_s2.data(), cfg.ch2, h8 * 2, w8 * 2, d_a1.data());
  relu_backward_inplace(c.a1, d_a1);

  Vec d_s1(c.s1.size(), 0.0);
  conv3x3_backward(p.r1, c.s1.data(), h8 * 2, w8 * 2, d_a1.data(), grad.r1,
                   d_s1.data());
  Vec d_u(c.u.size(), 0.0);
  upsample2_backward(d_s1.data(), cfg.ch3, h8, w8, d_u.data());
  relu_backward_inplace(c.u, d_u);
  d_embed.assign(c.embed.size(), 0.0);
  linear_backward(p.up, c.embed.data(), d_u.data(), grad.up, d_embed.data());
}

double predict_om(const ModelBundle& b, const ImageTile& tile,
                  const Vec* attrs) {
  Embedding phi = encoder_forward(b.enc_cfg, b.params.enc, tile);
  Vec z;
  if (attrs) {
    AttrCache ac;
    attr_forward(b.attr_cfg, b.params.attr, *attrs, ac);
    z = ac.z;
  }
  const Embedding cond = condition(phi, z, b.attr_cfg.embed_dim);
  return decode_forward(b.dec_cfg, b.params.dec, cond);
}

}  // namespace cacmda
