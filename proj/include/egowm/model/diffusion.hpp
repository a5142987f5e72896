#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "egowm/core/error.hpp"
#include "egowm/core/random.hpp"
#include "egowm/core/tensor.hpp"

namespace egowm::model {

/// Variance schedule indexed 1..T; index 0 is the clean latent (alpha_bar = 1).
class NoiseSchedule {
 public:
  NoiseSchedule() : NoiseSchedule(linear(1000, 1e-4, 2e-2)) {}

  explicit NoiseSchedule(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("noise schedule: at least one step required");
    beta_.assign(1, 0.0);
    alpha_bar_.assign(1, 1.0);
    for (double b : betas) {
      if (!(b >= 0.0 && b < 1.0)) throw ConfigError("noise schedule: beta must lie in [0, 1)");
      beta_.push_back(b);
      alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
    }
  }

  static NoiseSchedule linear(int64_t steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("noise schedule: steps must be positive");
    std::vector<double> b(static_cast<size_t>(steps));
    for (int64_t i = 0; i < steps; ++i) {
      const double f = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
      b[static_cast<size_t>(i)] = beta_start + f * (beta_end - beta_start);
    }
    return NoiseSchedule(std::move(b));
  }

  int64_t steps() const { return static_cast<int64_t>(beta_.size()) - 1; }
  double beta(int64_t t) const { return beta_.at(checked(t, 1)); }
  double alpha(int64_t t) const { return 1.0 - beta(t); }
  double alpha_bar(int64_t t) const { return alpha_bar_.at(checked(t, 0)); }

  /// `count` timesteps spread evenly over [1, T], descending. Used by the respaced sampler.
  std::vector<int64_t> respaced(int64_t count) const {
    if (count < 0) throw ConfigError("sampler steps must be non-negative");
    std::vector<int64_t> out;
    if (count == 0) return out;
    const int64_t T = steps();
    for (int64_t i = count - 1; i >= 0; --i) {
      const double f = count == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(count - 1);
      out.push_back(1 + static_cast<int64_t>(std::llround(f * static_cast<double>(T - 1))));
    }
    return out;
  }

 private:
  size_t checked(int64_t t, int64_t lo) const {
    if (t < lo || t > steps()) {
      throw ConfigError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " + std::to_string(steps()) + "]");
    }
    return static_cast<size_t>(t);
  }

  std::vector<double> beta_, alpha_bar_;
};

/// One forward transition q(z_t | z_{t-1}).
template <typename T>
Tensor<T> noising_step(const Tensor<T>& z_prev, int64_t t, const NoiseSchedule& schedule, Rng& rng) {
  const double b = schedule.beta(t);
  const double keep = std::sqrt(1.0 - b), sd = std::sqrt(b);
  Tensor<T> out(z_prev.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(keep * z_prev[i] + sd * rng.normal());
  return out;
}

/// Closed-form q(z_t | z_0) given the noise draw.
template <typename T>
Tensor<T> forward_noising(const Tensor<T>& z0, int64_t t, const Tensor<T>& eps, const NoiseSchedule& schedule) {
  if (z0.shape() != eps.shape()) throw ShapeError("forward_noising: noise shape " + egowm::to_string(eps.shape()) + " vs " + egowm::to_string(z0.shape()));
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
  Tensor<T> out(z0.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(a * z0[i] + s * eps[i]);
  return out;
}

/// Ancestral update from timestep `t` to `t_prev` (0 = clean) of a respaced chain, given the
/// predicted noise. The final step returns the posterior mean without fresh noise.
template <typename T>
Tensor<T> ancestral_step(const Tensor<T>& z_t, const Tensor<T>& eps_hat, int64_t t, int64_t t_prev, const NoiseSchedule& schedule,
                         Rng& rng) {
  if (t_prev >= t) throw ConfigError("ancestral_step: t_prev must precede t");
  const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(t_prev);
  const double beta = 1.0 - ab / ab_prev;
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
  const double sd = t_prev > 0 ? std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab)) : 0.0;
  const double inv_a = 1.0 / std::sqrt(ab), s = std::sqrt(1.0 - ab);
  Tensor<T> out(z_t.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    const double x0 = (z_t[i] - s * eps_hat[i]) * inv_a;
    double v = c0 * x0 + ct * z_t[i];
    if (sd > 0) v += sd * rng.normal();
    out[i] = static_cast<T>(v);
  }
  return out;
}

}  // namespace egowm::model
