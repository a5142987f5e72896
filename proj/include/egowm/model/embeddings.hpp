#pragma once

#include <string>
#include <vector>

#include "egowm/core/attention.hpp"
#include "egowm/core/layers.hpp"
#include "egowm/model/codec.hpp"
#include "egowm/model/config.hpp"

namespace egowm::model {

enum class Stream { hke, eme, oee };

inline const char* to_string(Stream s) {
  switch (s) {
    case Stream::hke: return "HKE";
    case Stream::eme: return "EME";
    case Stream::oee: return "OEE";
  }
  return "?";
}

/// Token sequence [N, d] flattened from a (t, h, w) grid in t-major order.
template <typename T>
struct EmbeddingTokens {
  Var<T> tokens;
  Grid grid;
  Stream stream = Stream::hke;
  GridPos shift{};

  int64_t count() const { return tokens.dim(0); }
  int64_t width() const { return tokens.dim(1); }
  std::vector<GridPos> positions() const { return grid_positions(grid.t, grid.h, grid.w); }
};

/// [d, t, h, w] feature map -> [t*h*w, d] tokens.
template <typename T>
Var<T> flatten_tokens(const Var<T>& fmap) {
  if (fmap.rank() != 4) throw ShapeError("flatten_tokens: expected [d,t,h,w], got " + egowm::to_string(fmap.shape()));
  const int64_t d = fmap.dim(0), n = fmap.dim(1) * fmap.dim(2) * fmap.dim(3);
  return ops::transpose(ops::reshape(fmap, {d, n}));
}

/// [N, d] tokens -> [d, t, h, w] feature map.
template <typename T>
Var<T> unflatten_tokens(const Var<T>& tokens, const Grid& g) {
  if (tokens.rank() != 2 || tokens.dim(0) != g.count()) throw ShapeError("unflatten_tokens: token count does not match grid");
  return ops::reshape(ops::transpose(tokens), {tokens.dim(1), g.t, g.h, g.w});
}

template <typename T>
EmbeddingTokens<T> make_tokens(const Var<T>& fmap, Stream stream, GridPos shift = {}) {
  return {flatten_tokens(fmap), Grid{fmap.dim(1), fmap.dim(2), fmap.dim(3)}, stream, shift};
}

/// Grayscale hand maps [L,1,S,S] replicated into the [3,L,S,S] hand volume.
template <typename T>
Tensor<T> hand_volume(const Tensor<float>& hand_maps) {
  const int64_t L = hand_maps.dim(0), plane = hand_maps.dim(2) * hand_maps.dim(3);
  Tensor<T> out(Shape{3, L, hand_maps.dim(2), hand_maps.dim(3)});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t l = 0; l < L; ++l)
      for (int64_t p = 0; p < plane; ++p) out[(c * L + l) * plane + p] = static_cast<T>(hand_maps[l * plane + p]);
  return out;
}

/// Object segmentation as RGB on black: the frame where the mask is set, zero elsewhere.
template <typename T>
Tensor<T> object_mask_image(const Tensor<float>& frame, const Tensor<float>& mask) {
  const int64_t plane = frame.dim(1) * frame.dim(2);
  Tensor<T> out(Shape{3, frame.dim(1), frame.dim(2)});
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t p = 0; p < plane; ++p) out[c * plane + p] = mask[p] > 0.5f ? static_cast<T>(frame[c * plane + p]) : T{0};
  return out;
}

// ------------------------------------------------------------------ layer chains

inline std::vector<LayerSpec> hke_chain(const ModelConfig& c) {
  const int64_t h = c.hke_hidden;
  const ops::Extents3 k{3, 3, 3}, p{1, 1, 1};
  return {LayerSpec::conv3d(3, h, k, {1, 1, 1}, p),
          LayerSpec::conv3d(h, h, k, {1, 1, 1}, p),
          LayerSpec::conv3d(h, h, k, {1, 1, 1}, p),
          LayerSpec::conv3d(h, h, k, {1, 2, 2}, p),
          LayerSpec::conv3d(h, h, k, {2, 2, 2}, p),
          LayerSpec::conv3d(h, h, k, {2, 2, 2}, p),
          LayerSpec::conv3d(h, c.width, {1, 2, 2}, {1, 2, 2}, {0, 0, 0})};
}

inline std::vector<LayerSpec> reference_chain(const ModelConfig& c) {
  const int64_t h = c.ref_hidden;
  return {LayerSpec::conv2d(3, h, 3, 1, 1), LayerSpec::conv2d(h, h, 3, 1, 1), LayerSpec::conv2d(h, h, 3, 1, 1),
          LayerSpec::conv2d(h, h, 3, 2, 1), LayerSpec::conv2d(h, h, 3, 2, 1), LayerSpec::conv2d(h, c.ref_channels, 3, 2, 1)};
}

inline std::vector<LayerSpec> eme_downsampler_chain(const ModelConfig& c) {
  const ops::Extents3 k{3, 3, 3}, p{1, 1, 1};
  const std::array<ops::Extents3, 3> strides{{{2, 2, 2}, {2, 2, 2}, {1, 2, 2}}};
  std::vector<LayerSpec> out;
  int64_t cin = 6;
  for (size_t i = 0; i < 3; ++i) {
    out.push_back(LayerSpec::causal_conv3d(cin, c.eme_down[i], k, strides[i], p));
    out.push_back(LayerSpec::group_norm(c.eme_down[i], default_groups(c.eme_down[i])));
    out.push_back(LayerSpec::silu());
    cin = c.eme_down[i];
  }
  return out;
}

/// Per-frame 3x3 convolutions are (1,3,3) 3D convolutions, equivalent to folding time into the batch.
inline std::vector<LayerSpec> eme_stage_chain(const ModelConfig& c, size_t stage, int64_t cin) {
  const int64_t co = c.eme_stages[stage];
  std::vector<LayerSpec> out{LayerSpec::group_norm(cin, default_groups(cin)), LayerSpec::silu(),
                             LayerSpec::conv3d(cin, co, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}),
                             LayerSpec::group_norm(co, default_groups(co)), LayerSpec::silu(),
                             LayerSpec::conv3d(co, co, {1, 3, 3}, {1, 1, 1}, {0, 1, 1})};
  if (c.eme_stage_downsample[stage]) out.push_back(LayerSpec::conv3d(co, co, {1, 3, 3}, {1, 2, 2}, {0, 1, 1}));
  out.push_back(LayerSpec::attention(co));
  return out;
}

inline std::vector<LayerSpec> eme_head_chain(const ModelConfig& c) {
  const int64_t ch = c.eme_stages[2];
  return {LayerSpec::group_norm(ch, default_groups(ch)), LayerSpec::conv3d(ch, ch, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}),
          LayerSpec::patchify3d(ch, c.width)};
}

inline std::vector<LayerSpec> eme_chain(const ModelConfig& c) {
  auto out = eme_downsampler_chain(c);
  int64_t cin = c.eme_down[2];
  for (size_t s = 0; s < 3; ++s) {
    for (const auto& l : eme_stage_chain(c, s, cin)) out.push_back(l);
    cin = c.eme_stages[s];
  }
  for (const auto& l : eme_head_chain(c)) out.push_back(l);
  return out;
}

// ------------------------------------------------------------------ encoders

/// HKE: temporal 3D convolution stack over the hand volume, SiLU between layers.
template <typename T>
class HandStreamEncoder {
 public:
  HandStreamEncoder() = default;
  HandStreamEncoder(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
    const auto chain = hke_chain(cfg);
    for (size_t i = 0; i < chain.size(); ++i) convs_.emplace_back(ps, prefix + ".conv" + std::to_string(i), chain[i], rng);
  }

  EmbeddingTokens<T> operator()(const Var<T>& hands) const {
    Var<T> x = hands;
    for (size_t i = 0; i < convs_.size(); ++i) {
      x = convs_[i](x);
      if (i + 1 < convs_.size()) x = ops::silu(x);
    }
    return make_tokens(x, Stream::hke);
  }

 private:
  std::vector<Conv<T>> convs_;
};

/// Reference-hand pyramid: six 3x3 conv + SiLU layers on the first hand render -> [C_ref, h, w].
template <typename T>
class ReferenceHandEncoder {
 public:
  ReferenceHandEncoder() = default;
  ReferenceHandEncoder(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng) {
    const auto chain = reference_chain(cfg);
    for (size_t i = 0; i < chain.size(); ++i) convs_.emplace_back(ps, prefix + ".conv" + std::to_string(i), chain[i], rng);
  }

  Var<T> operator()(const Var<T>& first_hand) const {
    Var<T> x = first_hand;
    for (const auto& c : convs_) x = ops::silu(c(x));
    return x;
  }

 private:
  std::vector<Conv<T>> convs_;
};

/// Self-attention along the frame axis, independently at every spatial location. Not residual:
/// with identity projections a temporally constant input passes through unchanged.
template <typename T>
class TemporalAttention {
 public:
  TemporalAttention() = default;
  TemporalAttention(ParameterSet<T>& ps, const std::string& prefix, int64_t channels, int64_t heads, Rng& rng) : heads_(heads) {
    q_ = Linear<T>(ps, prefix + ".q", channels, channels, rng);
    k_ = Linear<T>(ps, prefix + ".k", channels, channels, rng);
    v_ = Linear<T>(ps, prefix + ".v", channels, channels, rng);
    o_ = Linear<T>(ps, prefix + ".o", channels, channels, rng);
  }

  /// x [C,T,H,W]
  Var<T> operator()(const Var<T>& x) const {
    const int64_t C = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
    const Var<T> seq = ops::reshape(ops::permute(x, {2, 3, 1, 0}), {h * w, t, C});
    const Var<T> y = o_(ops::attention(q_(seq), k_(seq), v_(seq), heads_));
    return ops::permute(ops::reshape(y, {h, w, t, C}), {3, 2, 0, 1});
  }

  Linear<T>& q() { return q_; }
  Linear<T>& k() { return k_; }
  Linear<T>& v() { return v_; }
  Linear<T>& o() { return o_; }

 private:
  int64_t heads_ = 1;
  Linear<T> q_, k_, v_, o_;
};

/// EME: causal downsampler, hybrid residual stages with temporal attention, projection head.
template <typename T>
class EgoMotionEncoder {
 public:
  EgoMotionEncoder() = default;
  EgoMotionEncoder(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const auto down = eme_downsampler_chain(cfg);
    for (size_t i = 0; i < 3; ++i) {
      const std::string n = prefix + ".down" + std::to_string(i);
      down_conv_.emplace_back(ps, n + ".conv", down[3 * i], rng);
      down_norm_.emplace_back(ps, n + ".norm", down[3 * i + 1].channels_in, down[3 * i + 1].groups, true);
    }
    int64_t cin = cfg.eme_down[2];
    for (size_t s = 0; s < 3; ++s) {
      const std::string n = prefix + ".stage" + std::to_string(s);
      const auto chain = eme_stage_chain(cfg, s, cin);
      Stage st;
      st.norm_a = GroupNorm<T>(ps, n + ".norm_a", chain[0].channels_in, chain[0].groups);
      st.conv_a = Conv<T>(ps, n + ".conv_a", chain[2], rng);
      st.norm_b = GroupNorm<T>(ps, n + ".norm_b", chain[3].channels_in, chain[3].groups);
      st.conv_b = Conv<T>(ps, n + ".conv_b", chain[5], rng);
      const int64_t co = cfg.eme_stages[s];
      if (cin != co) st.skip = Conv<T>(ps, n + ".skip", LayerSpec::conv3d(cin, co, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}), rng);
      st.has_skip = cin != co;
      if (cfg.eme_stage_downsample[s]) st.down = Conv<T>(ps, n + ".down", chain[6], rng);
      st.has_down = cfg.eme_stage_downsample[s];
      st.attn = TemporalAttention<T>(ps, n + ".tattn", co, cfg.eme_attention_heads, rng);
      stages_.push_back(std::move(st));
      cin = co;
    }
    const auto head = eme_head_chain(cfg);
    head_norm_ = GroupNorm<T>(ps, prefix + ".head.norm", head[0].channels_in, head[0].groups);
    head_mix_ = Conv<T>(ps, prefix + ".head.mix", head[1], rng);
    head_patch_ = Conv<T>(ps, prefix + ".head.patch", head[2], rng);
  }

  /// Causal downsampler only: [6,L,S,S] -> [C0, T', S/8, S/8].
  Var<T> downsample(const Var<T>& plucker) const {
    Var<T> x = plucker;
    for (size_t i = 0; i < down_conv_.size(); ++i) x = ops::silu(down_norm_[i](down_conv_[i](x)));
    return x;
  }

  EmbeddingTokens<T> operator()(const Var<T>& plucker) const {
    Var<T> x = downsample(plucker);
    for (const auto& st : stages_) {
      Var<T> h = st.conv_a(ops::silu(st.norm_a(x)));
      h = st.conv_b(ops::silu(st.norm_b(h)));
      x = ops::add(st.has_skip ? st.skip(x) : x, h);
      if (st.has_down) x = st.down(x);
      x = st.attn(x);
    }
    x = head_patch_(head_mix_(head_norm_(x)));
    return make_tokens(x, Stream::eme);
  }

  TemporalAttention<T>& temporal_attention(size_t stage) { return stages_[stage].attn; }

 private:
  struct Stage {
    GroupNorm<T> norm_a, norm_b;
    Conv<T> conv_a, conv_b, skip, down;
    bool has_skip = false, has_down = false;
    TemporalAttention<T> attn;
  };
  ModelConfig cfg_;
  std::vector<Conv<T>> down_conv_;
  std::vector<GroupNorm<T>> down_norm_;
  std::vector<Stage> stages_;
  GroupNorm<T> head_norm_;
  Conv<T> head_mix_, head_patch_;
};

/// OEE: frozen codec encoding of the first-frame object image, broadcast over the latent time axis,
/// then a (1,2,2) patchifier. Tokens carry the rotary shift that anchors them apart from the main grid.
template <typename T>
class ObjectEntityEncoder {
 public:
  ObjectEntityEncoder() = default;
  ObjectEntityEncoder(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    patch_ = Conv<T>(ps, prefix + ".patch", LayerSpec::patchify3d(cfg.latent_channels, cfg.width), rng);
  }

  /// Single-frame latent [c_lat, 1, h, w] of a [3,S,S] image, no gradient into the codec.
  static Tensor<T> image_latent(const Tensor<T>& image, const LatentCodec<T>& codec) {
    const int64_t S = image.dim(1);
    return codec.encode_scaled(image.reshaped({3, 1, S, image.dim(2)}));
  }

  /// Latent grid broadcast over the temporal axis: [c_lat, T', h, w].
  Tensor<T> latent_grid(const Tensor<T>& image, const LatentCodec<T>& codec) const {
    const Tensor<T> z = image_latent(image, codec);
    const int64_t t = cfg_.latent_grid().t, plane = z.dim(2) * z.dim(3);
    Tensor<T> out(Shape{z.dim(0), t, z.dim(2), z.dim(3)});
    for (int64_t c = 0; c < z.dim(0); ++c)
      for (int64_t f = 0; f < t; ++f) std::copy_n(z.data() + c * plane, plane, out.data() + (c * t + f) * plane);
    return out;
  }

  EmbeddingTokens<T> operator()(const Tensor<T>& mask_image, const LatentCodec<T>& codec) const {
    return tokens(latent_grid(mask_image, codec));
  }

  /// Tokens from a precomputed latent grid (the codec is frozen, so callers may cache it).
  EmbeddingTokens<T> tokens(const Tensor<T>& latent) const {
    return make_tokens(patch_(ops::constant(latent)), Stream::oee, cfg_.oee_shift());
  }

 private:
  ModelConfig cfg_;
  Conv<T> patch_;
};

}  // namespace egowm::model
