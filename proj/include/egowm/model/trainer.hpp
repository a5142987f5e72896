#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "egowm/model/checkpoint.hpp"
#include "egowm/model/world_model.hpp"

namespace egowm::model {

struct TrainOptions {
  int64_t steps = 1000;
  double lr = 1e-5;
  double lr_final = -1;  // cosine decay target; negative keeps lr constant
  double clip_norm = 1.0;
  uint64_t seed = 0;
  int64_t codec_steps = 1500;
  double codec_lr = 2e-3;
};

struct TrainRecord {
  int64_t step = 0;
  double loss = 0;
  double lr = 0;
};

/// Denoising-objective training over every length-L window of a clip set. The codec is pretrained
/// once and then frozen; each step draws (window, t, eps) from Rng::derive(seed, step), so a
/// resumed run replays exactly the steps an uninterrupted run would take.
template <typename T>
class Trainer {
 public:
  Trainer(WorldModel<T>& model, const std::vector<world::Clip>& clips, TrainOptions opt) : model_(model), opt_(opt) {
    const int64_t L = model.config().frames;
    for (const auto& c : clips)
      for (int64_t s : world::window_starts(c.length, L)) windows_.push_back(world::window(c, s, L));
    if (windows_.empty()) throw DataError("training set is empty (no clip covers " + std::to_string(L) + " frames)");
    for (auto* p : model_.denoiser_parameters()) handles_.push_back(*p);
    AdamOptions ao;
    ao.lr = opt_.lr;
    ao.clip_norm = opt_.clip_norm;
    adam_.emplace(handles_, ao);
  }

  const TrainOptions& options() const { return opt_; }
  int64_t step_index() const { return step_; }
  int64_t windows() const { return static_cast<int64_t>(windows_.size()); }
  Adam<T>& optimizer() { return *adam_; }

  /// Reconstruction pretraining of the codec on all windows (skipped after resume).
  std::vector<double> pretrain_codec() {
    std::vector<Tensor<T>> videos;
    for (const auto& w : windows_) videos.push_back(world::channels_first(w.rgb).template cast<T>());
    auto losses = model::pretrain_codec(model_.codec(), model_.codec_parameters(), videos, {opt_.codec_steps, opt_.codec_lr, opt_.seed});
    codec_ready_ = true;
    prepare();
    return losses;
  }

  double lr_at(int64_t step) const {
    if (opt_.lr_final < 0 || opt_.steps <= 1) return opt_.lr;
    const double f = std::min(1.0, static_cast<double>(step) / static_cast<double>(opt_.steps));
    return opt_.lr_final + (opt_.lr - opt_.lr_final) * 0.5 * (1.0 + std::cos(M_PI * f));
  }

  TrainRecord step() {
    if (!codec_ready_) pretrain_codec();
    Rng rng = Rng::derive(opt_.seed, static_cast<uint64_t>(step_));
    const auto i = static_cast<size_t>(rng.uniform_int(0, windows() - 1));
    const int64_t t = rng.uniform_int(1, model_.schedule().steps());
    const Tensor<T> eps = rng.normal_tensor<T>(model_.latent_shape());
    TrainRecord rec{step_, 0, lr_at(step_)};
    adam_->options().lr = rec.lr;
    adam_->zero_grad();
    const Var<T> loss = model_.training_loss(latents_[i], t, eps, model_.condition(prepared_[i]));
    rec.loss = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(rec.loss)) throw NumericError("training loss is not finite at step " + std::to_string(step_));
    backward(loss);
    adam_->step();
    ++step_;
    return rec;
  }

  /// Runs until `opt.steps` total steps have been taken.
  std::vector<TrainRecord> run(const std::function<void(const TrainRecord&)>& on_step = {}) {
    std::vector<TrainRecord> out;
    while (step_ < opt_.steps) {
      out.push_back(step());
      if (on_step) on_step(out.back());
    }
    return out;
  }

  /// Mean loss over evenly spaced timesteps for every window, with fixed noise draws.
  double evaluation_loss(int64_t timesteps = 50, uint64_t seed = 99) {
    if (!codec_ready_) throw ConfigError("evaluation_loss: codec has not been trained");
    NoGradGuard guard;
    const int64_t T_max = model_.schedule().steps();
    double total = 0;
    int64_t n = 0;
    for (size_t i = 0; i < windows_.size(); ++i) {
      const auto c = model_.condition(prepared_[i]);
      for (int64_t k = 0; k < timesteps; ++k) {
        const int64_t t = 1 + (k * (T_max - 1)) / std::max<int64_t>(1, timesteps - 1);
        Rng rng = Rng::derive(seed, static_cast<uint64_t>(i * 100003 + static_cast<size_t>(k)));
        total += static_cast<double>(model_.training_loss(latents_[i], t, rng.normal_tensor<T>(model_.latent_shape()), c).value()[0]);
        ++n;
      }
    }
    return total / static_cast<double>(n);
  }

  void save(const std::filesystem::path& dir) {
    CheckpointInfo info;
    info.step = step_;
    info.extra["codec_ready"] = codec_ready_ ? "1" : "0";
    info.extra["seed"] = std::to_string(opt_.seed);
    save_checkpoint(dir, model_.parameters(), model_.config(), info, &*adam_);
  }

  void resume(const std::filesystem::path& dir) {
    const CheckpointInfo info = load_checkpoint(dir, model_.parameters(), model_.config(), &*adam_);
    step_ = info.step;
    const auto it = info.extra.find("codec_ready");
    codec_ready_ = it != info.extra.end() && it->second == "1";
    if (codec_ready_) prepare();
  }

  const world::Clip& window(int64_t i) const { return windows_.at(static_cast<size_t>(i)); }

 private:
  void prepare() {
    prepared_.clear();
    latents_.clear();
    NoGradGuard guard;
    for (const auto& w : windows_) {
      prepared_.push_back(model_.prepare(Prompt::from_clip(w), w.actions()));
      latents_.push_back(model_.codec().encode_scaled(world::channels_first(w.rgb).template cast<T>()));
    }
  }

  WorldModel<T>& model_;
  TrainOptions opt_;
  std::vector<world::Clip> windows_;
  std::vector<Parameter<T>> handles_;
  std::optional<Adam<T>> adam_;
  std::vector<PreparedInputs<T>> prepared_;
  std::vector<Tensor<T>> latents_;
  bool codec_ready_ = false;
  int64_t step_ = 0;
};

}  // namespace egowm::model
