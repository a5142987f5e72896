#pragma once

#include <optional>
#include <string>
#include <vector>

#include "egowm/geometry/camera.hpp"
#include "egowm/model/codec.hpp"
#include "egowm/model/diffusion.hpp"
#include "egowm/model/dit.hpp"
#include "egowm/model/embeddings.hpp"
#include "egowm/world/clip.hpp"

namespace egowm::model {

inline constexpr int64_t kDefaultSamplingSteps = 50;

/// What a rollout starts from: the first frame, its object mask, and the camera.
struct Prompt {
  Tensor<float> first_frame;  // [3,S,S]
  Tensor<float> object_mask;  // [1,S,S]
  geometry::Intrinsics intrinsics;

  static Prompt from_clip(const world::Clip& clip) {
    const int64_t plane = clip.size * clip.size;
    Tensor<float> mask(Shape{1, clip.size, clip.size});
    std::copy_n(clip.object_masks.data(), plane, mask.data());
    return {clip.frame(0), std::move(mask), clip.intrinsics};
  }
};

/// Conditioning inputs of one clip as tensors.
template <typename T>
struct ClipInputs {
  Tensor<T> first_frame;   // [3,S,S]
  Tensor<T> first_hand;    // [3,S,S]
  Tensor<T> hands;         // [3,L,S,S]
  Tensor<T> plucker;       // [6,L,S,S]
  Tensor<T> object_image;  // [3,S,S]
};

template <typename T>
ClipInputs<T> make_inputs(const Prompt& prompt, const world::ActionScript& actions) {
  const int64_t S = prompt.first_frame.dim(1);
  if (actions.hand_maps.rank() != 4 || actions.hand_maps.dim(0) != actions.length() || actions.hand_maps.dim(2) != S) {
    throw DataError("action script: hand renders " + egowm::to_string(actions.hand_maps.shape()) + " do not match " +
                    std::to_string(actions.length()) + " poses at size " + std::to_string(S));
  }
  ClipInputs<T> in;
  in.first_frame = prompt.first_frame.cast<T>();
  in.hands = hand_volume<T>(actions.hand_maps);
  const int64_t L = actions.length(), plane = S * S;
  in.first_hand = Tensor<T>(Shape{3, S, S});
  for (int64_t c = 0; c < 3; ++c) std::copy_n(in.hands.data() + c * L * plane, plane, in.first_hand.data() + c * plane);
  in.plucker = geometry::plucker_volume<T>(prompt.intrinsics, actions.poses, S, S);
  in.object_image = object_mask_image<T>(prompt.first_frame, prompt.object_mask);
  return in;
}

/// Inputs plus the frozen-codec tensors derived from them.
template <typename T>
struct PreparedInputs {
  ClipInputs<T> raw;
  Tensor<T> anchor_base;    // Y: first-frame latent and visibility mask, [C_ref, T', h, w]
  Tensor<T> object_latent;  // [c_lat, T', h, w]
};

/// Which action streams reach the denoiser. The anchor and image context are always present.
struct StreamSelection {
  bool hke = true, eme = true, oee = true;
};

template <typename T>
struct Conditioning {
  std::optional<EmbeddingTokens<T>> hke, eme, oee;
  Var<T> anchor;   // [C_ref, T', h, w]
  Var<T> context;  // [K, d]
};

/// Y: c_lat channels carrying the first-frame latent at latent frame 0, then mask channels set to
/// one at latent frame 0. Zero elsewhere.
template <typename T>
Tensor<T> anchor_base(const Tensor<T>& first_latent, const ModelConfig& cfg) {
  const Grid g = cfg.latent_grid();
  if (first_latent.shape() != Shape{cfg.latent_channels, 1, g.h, g.w}) {
    throw ShapeError("anchor: first-frame latent " + egowm::to_string(first_latent.shape()));
  }
  const int64_t plane = g.h * g.w;
  Tensor<T> y(Shape{cfg.ref_channels, g.t, g.h, g.w});
  for (int64_t c = 0; c < cfg.latent_channels; ++c) std::copy_n(first_latent.data() + c * plane, plane, y.data() + c * g.t * plane);
  for (int64_t c = cfg.latent_channels; c < cfg.ref_channels; ++c) std::fill_n(y.data() + c * g.t * plane, plane, T{1});
  return y;
}

/// Y with the reference-hand feature [C_ref, h, w] added at latent frame 0.
template <typename T>
Var<T> add_reference(const Tensor<T>& y, const Var<T>& ref) {
  const int64_t C = y.dim(0), t = y.dim(1), h = y.dim(2), w = y.dim(3);
  if (ref.shape() != Shape{C, h, w}) throw ShapeError("anchor: reference feature " + egowm::to_string(ref.shape()));
  Var<T> r = ops::reshape(ref, {C, 1, h, w});
  if (t > 1) r = ops::concat<T>({r, ops::constant(Tensor<T>(Shape{C, t - 1, h, w}))}, 1);
  return ops::add(ops::constant(y), r);
}

/// X_0 = T_main + gamma_h * T_HKE
template <typename T>
Var<T> fuse_hand_tokens(const Var<T>& main, const Var<T>& hke, const Var<T>& gamma) {
  if (main.shape() != hke.shape()) {
    throw ShapeError("fuse_hand_tokens: " + egowm::to_string(main.shape()) + " vs " + egowm::to_string(hke.shape()));
  }
  return ops::add(main, ops::gate(hke, gamma));
}

/// T_all = [X_0; T_OEE]
template <typename T>
Var<T> extend_sequence(const Var<T>& x0, const Var<T>& objects) {
  if (x0.rank() != 2 || objects.rank() != 2 || x0.dim(1) != objects.dim(1)) {
    throw ShapeError("extend_sequence: " + egowm::to_string(x0.shape()) + " vs " + egowm::to_string(objects.shape()));
  }
  return ops::concat<T>({x0, objects}, 0);
}

/// Tokens [n, d] followed by zero rows up to `rows`.
template <typename T>
Var<T> pad_rows(const Var<T>& x, int64_t rows) {
  const int64_t n = x.dim(0);
  if (rows < n) throw ShapeError("pad_rows: cannot pad " + std::to_string(n) + " rows to " + std::to_string(rows));
  if (rows == n) return x;
  return ops::concat<T>({x, ops::constant(Tensor<T>(Shape{rows - n, x.dim(1)}))}, 0);
}

struct Rollout {
  Tensor<float> latent;  // [c_lat, T', h, w]
  Tensor<float> frames;  // [L, 3, S, S] in [0,1]
  std::vector<int64_t> timesteps;

  int64_t length() const { return frames.dim(0); }
  Tensor<float> frame(int64_t i) const {
    const int64_t n = frames.size() / frames.dim(0);
    Tensor<float> f(Shape{frames.dim(1), frames.dim(2), frames.dim(3)});
    std::copy_n(frames.data() + i * n, n, f.data());
    return f;
  }
  /// Per-step view of the joint rollout: frame i+1 as produced from frame i and action i.
  std::pair<Tensor<float>, Tensor<float>> transition(int64_t i) const {
    if (i < 0 || i + 1 >= length()) throw ConfigError("rollout transition index out of range");
    return {frame(i), frame(i + 1)};
  }
};

/// The full latent world model: frozen codec, the three action encoders, anchor and context
/// encoders, and the DiT denoiser with its fusion gate and per-block adapters.
template <typename T>
class WorldModel {
 public:
  explicit WorldModel(const ModelConfig& cfg, uint64_t seed = 0) : cfg_(cfg), schedule_(NoiseSchedule::linear(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end)) {
    cfg_.validate();
    Rng rng = Rng::derive(seed, 0x3d17);
    codec_ = LatentCodec<T>(ps_, "codec", cfg_, rng);
    hke_ = HandStreamEncoder<T>(ps_, "hke", cfg_, rng);
    ref_ = ReferenceHandEncoder<T>(ps_, "reference", cfg_, rng);
    eme_ = EgoMotionEncoder<T>(ps_, "eme", cfg_, rng);
    oee_ = ObjectEntityEncoder<T>(ps_, "oee", cfg_, rng);
    context_ = ContextEncoder<T>(ps_, "context", cfg_, rng);
    patch_in_ = Conv<T>(ps_, "dit.patch", LayerSpec::patchify3d(cfg_.latent_channels + cfg_.ref_channels, cfg_.width), rng);
    time1_ = Linear<T>(ps_, "dit.time.fc1", kTimeFrequencies, cfg_.width, rng);
    time2_ = Linear<T>(ps_, "dit.time.fc2", cfg_.width, cfg_.width, rng);
    gamma_ = ps_.add("dit.gamma_h", Tensor<T>(Shape{1}, static_cast<T>(cfg_.gamma_init)));
    for (int64_t l = 0; l < cfg_.adapter_depth; ++l)
      adapters_.emplace_back(ps_, "dit.adapter" + std::to_string(l), cfg_.width, cfg_.width, rng, Init::zeros);
    for (int64_t l = 0; l < cfg_.blocks; ++l) blocks_.emplace_back(ps_, "dit.block" + std::to_string(l), cfg_, rng);
    head_ = OutputHead<T>(ps_, "dit.head", cfg_, rng);
  }

  WorldModel(const WorldModel&) = delete;
  WorldModel& operator=(const WorldModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  ParameterSet<T>& parameters() { return ps_; }
  const ParameterSet<T>& parameters() const { return ps_; }
  LatentCodec<T>& codec() { return codec_; }
  const LatentCodec<T>& codec() const { return codec_; }
  Parameter<T>& gamma_h() { return gamma_; }
  Linear<T>& adapter(int64_t l) { return adapters_.at(static_cast<size_t>(l)); }
  OutputHead<T>& head() { return head_; }

  std::vector<Parameter<T>*> codec_parameters() { return codec_.parameters(ps_, "codec"); }

  /// Everything trained by the diffusion objective (the codec is excluded).
  std::vector<Parameter<T>*> denoiser_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto* p : ps_.pointers())
      if (p->name().rfind("codec.", 0) != 0) out.push_back(p);
    return out;
  }

  Shape latent_shape() const {
    const Grid g = cfg_.latent_grid();
    return {cfg_.latent_channels, g.t, g.h, g.w};
  }

  PreparedInputs<T> prepare(ClipInputs<T> in) const {
    const int64_t S = cfg_.size;
    if (in.first_frame.shape() != Shape{3, S, S} || in.hands.shape() != Shape{3, cfg_.frames, S, S} ||
        in.plucker.shape() != Shape{6, cfg_.frames, S, S}) {
      throw DataError("clip inputs do not match the configured horizon " + std::to_string(cfg_.frames) + " and size " +
                      std::to_string(S));
    }
    PreparedInputs<T> p;
    p.anchor_base = anchor_base(ObjectEntityEncoder<T>::image_latent(in.first_frame, codec_), cfg_);
    p.object_latent = oee_.latent_grid(in.object_image, codec_);
    p.raw = std::move(in);
    return p;
  }

  PreparedInputs<T> prepare(const Prompt& prompt, const world::ActionScript& actions) const {
    if (actions.length() != cfg_.frames) {
      throw DataError("action horizon " + std::to_string(actions.length()) + " does not match the configured " +
                      std::to_string(cfg_.frames) + " frames");
    }
    return prepare(make_inputs<T>(prompt, actions));
  }

  /// Anchor (Y with R_ref added at frame 0) and the global image context tokens.
  std::pair<Var<T>, Var<T>> build_anchor(const PreparedInputs<T>& p) const {
    return {add_reference(p.anchor_base, ref_(ops::constant(p.raw.first_hand))), context_(ops::constant(p.raw.first_frame))};
  }

  Conditioning<T> condition(const PreparedInputs<T>& p, StreamSelection streams = {}) const {
    Conditioning<T> c;
    std::tie(c.anchor, c.context) = build_anchor(p);
    if (streams.hke) c.hke = hke_(ops::constant(p.raw.hands));
    if (streams.eme) c.eme = eme_(ops::constant(p.raw.plucker));
    if (streams.oee) c.oee = oee_.tokens(p.object_latent);
    return c;
  }

  /// Delta X_l = U_l(T_EME zero-padded to `length` rows); undefined (a no-op) for l >= D.
  Var<T> adapter_residual(const Var<T>& eme_tokens, int64_t l, int64_t length) const {
    if (l >= cfg_.adapter_depth) return {};
    return adapters_[static_cast<size_t>(l)](pad_rows(eme_tokens, length));
  }

  /// Predicted noise for latent z_t at timestep t in [0, T].
  Var<T> denoise_predict(const Var<T>& z_t, double t, const Conditioning<T>& c) const {
    if (z_t.shape() != latent_shape()) throw ShapeError("denoise: latent " + egowm::to_string(z_t.shape()) + " vs " + egowm::to_string(latent_shape()));
    const Grid g = cfg_.token_grid();
    const int64_t N = g.count(), d = cfg_.width;
    const auto check = [&](const std::optional<EmbeddingTokens<T>>& s, bool same_count) {
      if (!s) return;
      if (s->width() != d || (same_count && s->count() != N)) {
        throw ShapeError(std::string("denoise: ") + to_string(s->stream) + " tokens " + egowm::to_string(s->tokens.shape()) +
                         " do not fit width " + std::to_string(d) + (same_count ? " and " + std::to_string(N) + " tokens" : ""));
      }
    };
    check(c.hke, true);
    check(c.eme, true);
    check(c.oee, false);
    if (c.context.rank() != 2 || c.context.dim(1) != d) throw ShapeError("denoise: context width mismatch");

    Var<T> x = flatten_tokens(patch_in_(ops::concat<T>({z_t, c.anchor}, 0)));
    if (c.hke) x = fuse_hand_tokens(x, c.hke->tokens, gamma_.var());
    const int64_t M = c.oee ? c.oee->count() : 0;
    Var<T> all = c.oee ? extend_sequence(x, c.oee->tokens) : x;

    const Var<T> temb = time2_(ops::silu(time1_(ops::constant(timestep_features<T>(t)))));
    const auto positions = grid_positions(g.t, g.h, g.w);
    const auto object_positions = c.oee ? c.oee->positions() : std::vector<GridPos>{};
    BlockContext<T> bc{ops::silu(temb), c.context, &positions, &object_positions, c.oee ? c.oee->shift : GridPos{}};

    for (int64_t l = 0; l < cfg_.blocks; ++l) {
      if (c.eme && l < cfg_.adapter_depth) all = ops::add(all, adapter_residual(c.eme->tokens, l, N + M));
      const Var<T> main = M ? ops::slice(all, 0, 0, N) : all;
      const Var<T> objects = M ? ops::slice(all, 0, N, N + M) : Var<T>{};
      const Var<T> updated = blocks_[static_cast<size_t>(l)](main, objects, bc);
      all = M ? ops::concat<T>({updated, objects}, 0) : updated;
    }
    const double ab = schedule_.alpha_bar(static_cast<int64_t>(std::llround(t)));
    return head_(M ? ops::slice(all, 0, 0, N) : all, bc.cond, g, z_t, std::sqrt(1.0 - ab), std::sqrt(ab));
  }

  /// ||eps - eps_hat||^2 averaged over elements, at z_t = q(z_t | z_0, eps).
  Var<T> training_loss(const Tensor<T>& z0, int64_t t, const Tensor<T>& eps, const Conditioning<T>& c) const {
    const Tensor<T> zt = forward_noising(z0, t, eps, schedule_);
    return ops::mse(denoise_predict(ops::constant(zt), static_cast<double>(t), c), ops::constant(eps));
  }

  /// Joint ancestral sampling of the whole-clip latent over `steps` respaced timesteps, then decoding.
  Rollout sample_rollout(const Prompt& prompt, const world::ActionScript& actions, int64_t steps, Rng& rng) const {
    const PreparedInputs<T> p = prepare(prompt, actions);
    NoGradGuard guard;
    const Conditioning<T> c = condition(p);
    Rollout r;
    r.timesteps = schedule_.respaced(steps);
    Tensor<T> z = rng.normal_tensor<T>(latent_shape());
    for (size_t i = 0; i < r.timesteps.size(); ++i) {
      const int64_t t = r.timesteps[i], t_prev = i + 1 < r.timesteps.size() ? r.timesteps[i + 1] : 0;
      const Tensor<T> eps = denoise_predict(ops::constant(z), static_cast<double>(t), c).value();
      z = ancestral_step(z, eps, t, t_prev, schedule_, rng);
    }
    Tensor<T> video = codec_.decode_scaled(z);
    for (auto& v : video.span()) v = std::clamp(v, T{0}, T{1});
    r.latent = z.template cast<float>();
    r.frames = world::frames_first(video.template cast<float>());
    return r;
  }

 private:
  ModelConfig cfg_;
  NoiseSchedule schedule_;
  ParameterSet<T> ps_;
  LatentCodec<T> codec_;
  HandStreamEncoder<T> hke_;
  ReferenceHandEncoder<T> ref_;
  EgoMotionEncoder<T> eme_;
  ObjectEntityEncoder<T> oee_;
  ContextEncoder<T> context_;
  Conv<T> patch_in_;
  Linear<T> time1_, time2_;
  Parameter<T> gamma_;
  std::vector<Linear<T>> adapters_;
  std::vector<DiTBlock<T>> blocks_;
  OutputHead<T> head_;
};

}  // namespace egowm::model
