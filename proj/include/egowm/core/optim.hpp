#pragma once

#include <cmath>
#include <vector>

#include "egowm/core/layers.hpp"

namespace egowm {

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables global-norm clipping
};

/// Adam over a fixed list of parameters. Moment buffers are exposed for checkpointing.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (const auto& p : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// Returns the gradient norm before clipping.
  double step() {
    double sq = 0;
    for (auto& p : params_) {
      const auto g = p.grad();
      for (auto v : g.span()) sq += static_cast<double>(v) * v;
    }
    const double norm = std::sqrt(sq);
    const double clip = (opts_.clip_norm > 0 && norm > opts_.clip_norm) ? opts_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      const auto g = params_[i].grad();
      auto& w = params_[i].mutable_value();
      auto& m = m_[i];
      auto& v = v_[i];
      for (int64_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]) * clip;
        m[j] = static_cast<T>(opts_.beta1 * m[j] + (1 - opts_.beta1) * gj);
        v[j] = static_cast<T>(opts_.beta2 * v[j] + (1 - opts_.beta2) * gj * gj);
        const double mh = m[j] / bc1, vh = v[j] / bc2;
        w[j] = static_cast<T>(w[j] - opts_.lr * mh / (std::sqrt(vh) + opts_.eps));
      }
    }
    return norm;
  }

  int64_t steps_taken() const { return t_; }
  void set_steps_taken(int64_t t) { t_ = t; }
  std::vector<Tensor<T>>& first_moments() { return m_; }
  std::vector<Tensor<T>>& second_moments() { return v_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  AdamOptions& options() { return opts_; }

 private:
  std::vector<Parameter<T>> params_;
  AdamOptions opts_;
  std::vector<Tensor<T>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace egowm
