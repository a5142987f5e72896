#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "egowm/core/attention.hpp"
#include "egowm/core/layers.hpp"
#include "egowm/model/config.hpp"
#include "egowm/model/embeddings.hpp"

namespace egowm::model {

inline constexpr int64_t kTimeFrequencies = 128;

/// Sinusoidal embedding of a (possibly respaced) diffusion timestep: [1, kTimeFrequencies].
template <typename T>
Tensor<T> timestep_features(double t) {
  const int64_t half = kTimeFrequencies / 2;
  Tensor<T> out(Shape{1, kTimeFrequencies});
  for (int64_t i = 0; i < half; ++i) {
    const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = static_cast<T>(std::cos(t * f));
    out[half + i] = static_cast<T>(std::sin(t * f));
  }
  return out;
}

/// x * (1 + scale) + shift, with shift/scale broadcast over tokens.
template <typename T>
Var<T> modulate(const Var<T>& x, const Var<T>& shift, const Var<T>& scale) {
  return ops::add_rowvec(ops::mul_rowvec(x, ops::add_scalar(scale, 1.0)), shift);
}

/// Global image context: strided conv pyramid, global average pool, projection to a few tokens.
/// Serves as the fixed keys/values of every block's cross-attention.
template <typename T>
class ContextEncoder {
 public:
  ContextEncoder() = default;
  ContextEncoder(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng)
      : tokens_(cfg.context_tokens), width_(cfg.width) {
    int64_t cin = 3;
    for (size_t i = 0; i < cfg.context_channels.size(); ++i) {
      convs_.emplace_back(ps, prefix + ".conv" + std::to_string(i), LayerSpec::conv2d(cin, cfg.context_channels[i], 3, 2, 1), rng);
      cin = cfg.context_channels[i];
    }
    proj_ = Linear<T>(ps, prefix + ".proj", cin, tokens_ * width_, rng);
  }

  /// first frame [3,S,S] -> context tokens [K, d]
  Var<T> operator()(const Var<T>& image) const {
    Var<T> x = image;
    for (const auto& c : convs_) x = ops::silu(c(x));
    const int64_t C = x.dim(0), P = x.dim(1) * x.dim(2);
    const Var<T> pooled = ops::matmul(ops::reshape(x, {C, P}), ops::constant(Tensor<T>(Shape{P, 1}, T(1.0 / double(P)))));
    return ops::layer_norm(ops::reshape(proj_(ops::reshape(pooled, {1, C})), {tokens_, width_}));
  }

 private:
  int64_t tokens_ = 0, width_ = 0;
  std::vector<Conv<T>> convs_;
  Linear<T> proj_;
};

/// Token streams and rotary layout seen by one block.
template <typename T>
struct BlockContext {
  Var<T> cond;     // silu(timestep embedding) [1, d]
  Var<T> context;  // cross-attention keys/values [K, d]
  const std::vector<GridPos>* positions = nullptr;
  const std::vector<GridPos>* object_positions = nullptr;
  GridPos object_shift{};
};

/// Pre-LN transformer block with adaLN modulation from the timestep. Self-attention queries are
/// the main tokens; keys/values are the main tokens followed by the object tokens, which are
/// never updated here. Cross-attention reads the global image context.
template <typename T>
class DiTBlock {
 public:
  DiTBlock() = default;
  DiTBlock(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng) : d_(cfg.width), heads_(cfg.heads) {
    const int64_t d = cfg.width;
    ada_ = Linear<T>(ps, prefix + ".ada", d, 6 * d, rng, Init::zeros);
    q_ = Linear<T>(ps, prefix + ".attn.q", d, d, rng);
    k_ = Linear<T>(ps, prefix + ".attn.k", d, d, rng);
    v_ = Linear<T>(ps, prefix + ".attn.v", d, d, rng);
    o_ = Linear<T>(ps, prefix + ".attn.o", d, d, rng);
    cq_ = Linear<T>(ps, prefix + ".cross.q", d, d, rng);
    ck_ = Linear<T>(ps, prefix + ".cross.k", d, d, rng);
    cv_ = Linear<T>(ps, prefix + ".cross.v", d, d, rng);
    co_ = Linear<T>(ps, prefix + ".cross.o", d, d, rng);
    fc1_ = Linear<T>(ps, prefix + ".mlp.fc1", d, cfg.mlp_ratio * d, rng);
    fc2_ = Linear<T>(ps, prefix + ".mlp.fc2", cfg.mlp_ratio * d, d, rng);
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& objects, const BlockContext<T>& bc) const {
    const Var<T> mod = ops::reshape(ada_(bc.cond), {6 * d_});
    const auto part = [&](int i) { return ops::slice(mod, 0, i * d_, (i + 1) * d_); };

    const Var<T> h = modulate(ops::layer_norm(x), part(0), part(1));
    const Var<T> q = ops::rope(q_(h), *bc.positions, GridPos{}, heads_);
    Var<T> k = ops::rope(k_(h), *bc.positions, GridPos{}, heads_);
    Var<T> v = v_(h);
    if (objects.defined()) {
      const Var<T> ho = modulate(ops::layer_norm(objects), part(0), part(1));
      k = ops::concat<T>({k, ops::rope(k_(ho), *bc.object_positions, bc.object_shift, heads_)}, 0);
      v = ops::concat<T>({v, v_(ho)}, 0);
    }
    Var<T> y = ops::add(x, ops::mul_rowvec(o_(ops::attention(q, k, v, heads_)), ops::add_scalar(part(2), 1.0)));

    const Var<T> hc = ops::layer_norm(y);
    y = ops::add(y, co_(ops::attention(cq_(hc), ck_(bc.context), cv_(bc.context), heads_)));

    const Var<T> hm = modulate(ops::layer_norm(y), part(3), part(4));
    return ops::add(y, ops::mul_rowvec(fc2_(ops::silu(fc1_(hm))), ops::add_scalar(part(5), 1.0)));
  }

 private:
  int64_t d_ = 0, heads_ = 1;
  Linear<T> ada_, q_, k_, v_, o_, cq_, ck_, cv_, co_, fc1_, fc2_;
};

/// Zero-initialized output head: adaLN, projection to patch values, unpatchify to the latent grid.
/// The prediction is eps_hat = skip * sigma_t * z_t + sqrt(alpha_bar_t) * F, where F is the
/// projected token output and `skip` a learnable gain starting at 0, so a zero head predicts 0.
/// With skip = 1 the network output F is the unit-variance velocity target, which keeps the
/// implied clean-latent estimate bounded at high noise.
template <typename T>
class OutputHead {
 public:
  OutputHead() = default;
  OutputHead(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng)
      : d_(cfg.width), c_(cfg.latent_channels) {
    ada_ = Linear<T>(ps, prefix + ".ada", d_, 2 * d_, rng, Init::zeros);
    proj_ = Linear<T>(ps, prefix + ".proj", d_, c_ * 4, rng, Init::zeros);
    skip_ = ps.add(prefix + ".skip", Tensor<T>(Shape{1}));
  }

  /// tokens [N, d] on grid g -> latent [c_lat, g.t, 2 g.h, 2 g.w]
  Var<T> features(const Var<T>& x, const Var<T>& cond, const Grid& g) const {
    const Var<T> mod = ops::reshape(ada_(cond), {2 * d_});
    const Var<T> h = modulate(ops::layer_norm(x), ops::slice(mod, 0, 0, d_), ops::slice(mod, 0, d_, 2 * d_));
    Var<T> y = ops::reshape(proj_(h), {g.t, g.h, g.w, c_, 2, 2});
    y = ops::permute(y, {3, 0, 1, 4, 2, 5});
    return ops::reshape(y, {c_, g.t, 2 * g.h, 2 * g.w});
  }

  Var<T> operator()(const Var<T>& x, const Var<T>& cond, const Grid& g, const Var<T>& z_t, double sigma, double sqrt_alpha_bar) const {
    return ops::add(ops::scale(ops::gate(z_t, skip_.var()), sigma), ops::scale(features(x, cond, g), sqrt_alpha_bar));
  }

  Linear<T>& projection() { return proj_; }
  Linear<T>& modulation() { return ada_; }
  Parameter<T>& skip() { return skip_; }

 private:
  int64_t d_ = 0, c_ = 0;
  Linear<T> ada_, proj_;
  Parameter<T> skip_;
};

}  // namespace egowm::model
