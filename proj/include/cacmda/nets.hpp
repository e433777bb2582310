#ifndef CACMDA_NETS_HPP_
#define CACMDA_NETS_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cacmda/data.hpp"

namespace cacmda {

using Vec = std::vector<double>;
using Embedding = Vec;

// Three conv blocks (3x3, stride 1, pad 1, ReLU, 2x2 max-pool) followed by a
// linear projection to the embedding.
struct EncoderConfig {
  std::uint32_t in_channels = 10;
  std::uint32_t height = 16;
  std::uint32_t width = 16;
  std::uint32_t ch1 = 16;
  std::uint32_t ch2 = 32;
  std::uint32_t ch3 = 64;
  std::uint32_t embed_dim = 32;

  void validate() const;
  std::uint32_t pooled_h() const { return height / 8; }
  std::uint32_t pooled_w() const { return width / 8; }
  std::uint32_t flat_dim() const { return ch3 * pooled_h() * pooled_w(); }
};

struct AttrConfig {
  std::uint32_t n_attr = 9;
  std::uint32_t hidden = 32;
  std::uint32_t embed_dim = 8;  // d_a
};

struct DecoderConfig {
  std::uint32_t hidden1 = 64;
  std::uint32_t hidden2 = 32;
};

struct Conv2d {
  std::uint32_t in_c = 0, out_c = 0;
  Vec w;  // [out_c][in_c][3][3]
  Vec b;  // [out_c]
};

struct Linear {
  std::uint32_t in = 0, out = 0;
  Vec w;  // [out][in]
  Vec b;  // [out]
};

struct EncoderParams {
  Conv2d c1, c2, c3;
  Linear proj;
};

struct AttrParams {
  Linear e1, e2;  // encoder: n_attr -> hidden -> d_a
  Linear d1, d2;  // decoder: d_a -> hidden -> n_attr
};

struct DecoderParams {
  Linear f1, f2, f3;  // (d + d_a) -> hidden1 -> hidden2 -> 1
};

// Pretraining-only deconvolutional head: embedding back to a tile via a
// linear up-projection and three upsample+conv blocks.
struct ReconParams {
  Linear up;          // embed -> ch3 * (h/8) * (w/8)
  Conv2d r1, r2, r3;  // ch3 -> ch2 -> ch1 -> in_channels
};

struct ModelParams {
  EncoderParams enc;
  AttrParams attr;
  DecoderParams dec;
};

struct ModelBundle {
  static constexpr std::uint32_t kVersion = 1;
  EncoderConfig enc_cfg;
  AttrConfig attr_cfg;
  DecoderConfig dec_cfg;
  std::uint64_t seed = 0;
  ModelParams params;
};

// ----- parameter plumbing --------------------------------------------------

struct TensorRef {
  std::string name;
  std::vector<std::uint32_t> dims;
  Vec* data;
};

// Fixed enumeration order; serialization and optimizer state rely on it.
std::vector<TensorRef> tensor_refs(ModelParams& p);
std::vector<TensorRef> tensor_refs(ReconParams& p);

ModelBundle init_bundle(const EncoderConfig& enc, const AttrConfig& attr,
                        const DecoderConfig& dec, std::uint64_t seed);
ModelParams zero_like(const ModelParams& p);
ReconParams init_recon(const EncoderConfig& enc, std::uint64_t seed);
ReconParams zero_like(const ReconParams& p);

// Rounds every parameter through float32 so bundle files are lossless.
template <typename Params>
void round_params_f32(Params& p) {
  for (auto& t : tensor_refs(p))
    for (double& v : *t.data) v = static_cast<double>(static_cast<float>(v));
}

// ----- forward / backward --------------------------------------------------

struct EncoderCache {
  Vec in;            // input tile as double
  Vec a1, a2, a3;    // post-ReLU conv maps
  Vec p1, p2, p3;    // pooled maps
  std::vector<std::uint32_t> i1, i2, i3;  // pool argmax (flat input indices)
};

Embedding encoder_forward(const EncoderConfig& cfg, const EncoderParams& p,
                          const ImageTile& tile,
                          EncoderCache* cache = nullptr);
void encoder_backward(const EncoderConfig& cfg, const EncoderParams& p,
                      const EncoderCache& cache, const Vec& d_embed,
                      EncoderParams& grad);

struct AttrCache {
  Vec in, h1, z, h2, recon;  // h1/h2 post-ReLU
};

void attr_forward(const AttrConfig& cfg, const AttrParams& p, const Vec& attrs,
                  AttrCache& cache);
// dz: loss gradient on the embedding z; drecon: on the reconstruction
void attr_backward(const AttrConfig& cfg, const AttrParams& p,
                   const AttrCache& cache, const Vec& dz, const Vec& drecon,
                   AttrParams& grad);

// [phi ‖ z]; pass z empty to substitute the zero vector (attribute-free
// inference).
Embedding condition(const Embedding& phi, const Vec& z, std::uint32_t d_a);

struct DecoderCache {
  Vec in, h1, h2;
  double out = 0.0;
};

double decode_forward(const DecoderConfig& cfg, const DecoderParams& p,
                      const Vec& conditioned, DecoderCache* cache = nullptr);
void decode_backward(const DecoderConfig& cfg, const DecoderParams& p,
                     const DecoderCache& cache, double d_out,
                     DecoderParams& grad, Vec& d_in);

struct ReconCache {
  Vec embed, u /*post-ReLU up projection*/;
  Vec s1, a1, s2, a2, s3;  // upsampled maps and post-ReLU conv maps
  Vec out;
};

Vec recon_forward(const EncoderConfig& cfg, const ReconParams& p,
                  const Embedding& embed, ReconCache& cache);
void recon_backward(const EncoderConfig& cfg, const ReconParams& p,
                    const ReconCache& cache, const Vec& d_out,
                    ReconParams& grad, Vec& d_embed);

// Convenience full forward pass. `attrs` may be null for satellite-only mode.
double predict_om(const ModelBundle& b, const ImageTile& tile,
                  const Vec* attrs);

// ----- bundle file ---------------------------------------------------------

// Versioned container: magic "OMMB", u32 version, length-prefixed UTF-8
// config snapshot, then named tensors (u32 name length, name, u32 ndims,
// dims, float32 payload), little-endian throughout.
void save_bundle(const ModelBundle& b, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace cacmda

#endif  // CACMDA_NETS_HPP_
