#pragma once

#include <string>
#include <vector>

#include "egowm/core/layers.hpp"
#include "egowm/core/optim.hpp"
#include "egowm/model/config.hpp"

namespace egowm::model {

/// Latent autoencoder. The encoder is a causal patch embedding (kernel = stride = (ts, ss, ss),
/// ts - 1 zero frames in front so frame 1 gets its own latent frame) followed by a pointwise MLP;
/// the decoder is a pointwise MLP and a depth-to-space unpatchify. Frames are in [0,1] and are
/// mapped to [-1,1] internally. `latent_scale` normalizes latents to unit variance for diffusion.
template <typename T>
class LatentCodec {
 public:
  LatentCodec() = default;
  LatentCodec(ParameterSet<T>& ps, const std::string& prefix, const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const auto chain = encoder_chain(cfg);
    enc_patch_ = Conv<T>(ps, prefix + ".enc.patch", chain[0], rng);
    enc_mix_ = Conv<T>(ps, prefix + ".enc.mix", chain[2], rng);
    const int64_t h = cfg.codec_decoder_hidden;
    dec_in_ = Conv<T>(ps, prefix + ".dec.in", LayerSpec::conv3d(cfg.latent_channels, h, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}), rng);
    dec_mid_ = Conv<T>(ps, prefix + ".dec.mid", LayerSpec::conv3d(h, h, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}), rng);
    dec_out_ = Conv<T>(ps, prefix + ".dec.out", LayerSpec::conv3d(h, 3 * patch_volume(), {1, 1, 1}, {1, 1, 1}, {0, 0, 0}), rng);
    scale_ = ps.add(prefix + ".latent_scale", Tensor<T>(Shape{1}, T{1}));
  }

  static std::vector<LayerSpec> encoder_chain(const ModelConfig& cfg) {
    const int64_t ts = cfg.temporal_stride, ss = cfg.spatial_stride;
    return {LayerSpec::causal_patch3d(3, cfg.codec_hidden, {ts, ss, ss}), LayerSpec::silu(),
            LayerSpec::conv3d(cfg.codec_hidden, cfg.latent_channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0})};
  }

  int64_t patch_volume() const { return cfg_.temporal_stride * cfg_.spatial_stride * cfg_.spatial_stride; }

  /// video [3,L,S,S] in [0,1] -> latent [c_lat, T', S/ss, S/ss] (unscaled)
  Var<T> encode(const Var<T>& video) const {
    if (video.rank() != 4 || video.dim(0) != 3) throw ShapeError("codec encode: expected [3,L,S,S], got " + egowm::to_string(video.shape()));
    const Var<T> x = ops::add_scalar(ops::scale(video, 2.0), -1.0);
    return enc_mix_(ops::silu(enc_patch_(x)));
  }

  /// latent [c_lat, T', h, w] (unscaled) -> video [3, (T'-1)*ts + 1, h*ss, w*ss]
  Var<T> decode(const Var<T>& latent) const {
    if (latent.rank() != 4 || latent.dim(0) != cfg_.latent_channels) {
      throw ShapeError("codec decode: expected [" + std::to_string(cfg_.latent_channels) + ",T,h,w], got " + egowm::to_string(latent.shape()));
    }
    const int64_t ts = cfg_.temporal_stride, ss = cfg_.spatial_stride;
    const int64_t t = latent.dim(1), h = latent.dim(2), w = latent.dim(3);
    Var<T> y = dec_out_(ops::silu(dec_mid_(ops::silu(dec_in_(latent)))));
    y = ops::reshape(y, {3, ts, ss, ss, t, h, w});
    y = ops::permute(y, {0, 4, 1, 5, 2, 6, 3});
    y = ops::reshape(y, {3, t * ts, h * ss, w * ss});
    y = ops::slice(y, 1, ts - 1, t * ts);
    return ops::add_scalar(ops::scale(y, 0.5), 0.5);
  }

  Var<T> reconstruct(const Var<T>& video) const { return decode(encode(video)); }

  T latent_scale() const { return scale_.value()[0]; }
  void set_latent_scale(T s) { scale_.mutable_value()[0] = s; }

  /// Diffusion-space latent of a video, computed without recording gradients.
  Tensor<T> encode_scaled(const Tensor<T>& video) const {
    NoGradGuard guard;
    auto z = encode(ops::constant(video)).value();
    for (auto& v : z.span()) v *= latent_scale();
    return z;
  }

  /// Frames from a diffusion-space latent, computed without recording gradients.
  Tensor<T> decode_scaled(const Tensor<T>& z) const {
    NoGradGuard guard;
    Tensor<T> raw = z;
    for (auto& v : raw.span()) v /= latent_scale();
    return decode(ops::constant(raw)).value();
  }

  std::vector<Parameter<T>*> parameters(ParameterSet<T>& ps, const std::string& prefix) const {
    std::vector<Parameter<T>*> out;
    for (auto* p : ps.pointers())
      if (p->name().rfind(prefix + ".", 0) == 0 && p->name() != prefix + ".latent_scale") out.push_back(p);
    return out;
  }

  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  Conv<T> enc_patch_, enc_mix_, dec_in_, dec_mid_, dec_out_;
  Parameter<T> scale_;
};

struct CodecPretrainOptions {
  int64_t steps = 1500;
  double lr = 2e-3;
  uint64_t seed = 0;
};

/// Plain reconstruction pretraining over a set of [3,L,S,S] videos, then sets latent_scale so the
/// encoded latents have unit standard deviation. Returns the per-step loss.
template <typename T>
std::vector<double> pretrain_codec(LatentCodec<T>& codec, std::vector<Parameter<T>*> params, const std::vector<Tensor<T>>& videos,
                                   const CodecPretrainOptions& opt) {
  if (videos.empty()) throw DataError("pretrain_codec: no videos");
  std::vector<Parameter<T>> handles;
  for (auto* p : params) handles.push_back(*p);
  AdamOptions ao;
  ao.lr = opt.lr;
  Adam<T> adam(handles, ao);
  std::vector<double> losses;
  for (int64_t step = 0; step < opt.steps; ++step) {
    Rng rng = Rng::derive(opt.seed, static_cast<uint64_t>(step));
    const auto& v = videos[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(videos.size()) - 1))];
    adam.zero_grad();
    const Var<T> x = ops::constant(v);
    const Var<T> loss = ops::mse(codec.reconstruct(x), x);
    backward(loss);
    adam.step();
    losses.push_back(static_cast<double>(loss.value()[0]));
  }
  double sq = 0;
  int64_t n = 0;
  {
    NoGradGuard guard;
    for (const auto& v : videos) {
      const auto z = codec.encode(ops::constant(v)).value();
      for (auto x : z.span()) sq += double(x) * double(x);
      n += z.size();
    }
  }
  const double rms = std::sqrt(sq / static_cast<double>(n));
  codec.set_latent_scale(static_cast<T>(rms > 1e-12 ? 1.0 / rms : 1.0));
  return losses;
}

}  // namespace egowm::model
