#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "egowm/core/tensor.hpp"

namespace egowm::eval {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE) for values in [0,1]; identical inputs give the cap.
inline double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: " + egowm::to_string(a.shape()) + " vs " + egowm::to_string(b.shape()));
  if (a.size() == 0) throw ShapeError("psnr: empty input");
  double se = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Mean per-frame PSNR of two [L, ...] videos.
inline double video_psnr(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape() || a.rank() < 2) throw ShapeError("video_psnr: shapes " + egowm::to_string(a.shape()) + " vs " + egowm::to_string(b.shape()));
  const int64_t L = a.dim(0), n = a.size() / L;
  double sum = 0;
  for (int64_t f = 0; f < L; ++f) {
    Tensor<float> fa(Shape{n}), fb(Shape{n});
    std::copy_n(a.data() + f * n, n, fa.data());
    std::copy_n(b.data() + f * n, n, fb.data());
    sum += psnr(fa, fb);
  }
  return sum / static_cast<double>(L);
}

namespace detail {

inline std::vector<double> gaussian_window(int64_t size, double sigma) {
  std::vector<double> w(static_cast<size_t>(size));
  double s = 0;
  for (int64_t i = 0; i < size; ++i) {
    const double x = static_cast<double>(i) - static_cast<double>(size - 1) / 2.0;
    w[static_cast<size_t>(i)] = std::exp(-x * x / (2 * sigma * sigma));
    s += w[static_cast<size_t>(i)];
  }
  for (auto& v : w) v /= s;
  return w;
}

/// Separable 'valid' filtering of an H x W plane.
inline std::vector<double> filter_valid(const std::vector<double>& x, int64_t H, int64_t W, const std::vector<double>& w) {
  const auto k = static_cast<int64_t>(w.size());
  const int64_t ho = H - k + 1, wo = W - k + 1;
  std::vector<double> rows(static_cast<size_t>(H * wo)), out(static_cast<size_t>(ho * wo));
  for (int64_t r = 0; r < H; ++r)
    for (int64_t c = 0; c < wo; ++c) {
      double s = 0;
      for (int64_t j = 0; j < k; ++j) s += w[static_cast<size_t>(j)] * x[static_cast<size_t>(r * W + c + j)];
      rows[static_cast<size_t>(r * wo + c)] = s;
    }
  for (int64_t r = 0; r < ho; ++r)
    for (int64_t c = 0; c < wo; ++c) {
      double s = 0;
      for (int64_t j = 0; j < k; ++j) s += w[static_cast<size_t>(j)] * rows[static_cast<size_t>((r + j) * wo + c)];
      out[static_cast<size_t>(r * wo + c)] = s;
    }
  return out;
}

}  // namespace detail

struct SsimOptions {
  int64_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double range = 1.0;
};

/// Gaussian-window SSIM over [H,W] or [C,H,W] (channels averaged), valid region only.
inline double ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& o = {}) {
  if (a.shape() != b.shape()) throw ShapeError("ssim: " + egowm::to_string(a.shape()) + " vs " + egowm::to_string(b.shape()));
  if (a.rank() != 2 && a.rank() != 3) throw ShapeError("ssim: expected [H,W] or [C,H,W], got " + egowm::to_string(a.shape()));
  const int64_t C = a.rank() == 3 ? a.dim(0) : 1, H = a.dim(-2), W = a.dim(-1);
  if (H < o.window || W < o.window) throw ShapeError("ssim: image " + egowm::to_string(a.shape()) + " smaller than the window");
  const auto w = detail::gaussian_window(o.window, o.sigma);
  const double c1 = (o.k1 * o.range) * (o.k1 * o.range), c2 = (o.k2 * o.range) * (o.k2 * o.range);
  const int64_t plane = H * W;
  double total = 0;
  for (int64_t c = 0; c < C; ++c) {
    std::vector<double> x(static_cast<size_t>(plane)), y(x.size()), xx(x.size()), yy(x.size()), xy(x.size());
    for (int64_t i = 0; i < plane; ++i) {
      const double u = a[c * plane + i], v = b[c * plane + i];
      x[static_cast<size_t>(i)] = u;
      y[static_cast<size_t>(i)] = v;
      xx[static_cast<size_t>(i)] = u * u;
      yy[static_cast<size_t>(i)] = v * v;
      xy[static_cast<size_t>(i)] = u * v;
    }
    const auto mx = detail::filter_valid(x, H, W, w), my = detail::filter_valid(y, H, W, w);
    const auto sxx = detail::filter_valid(xx, H, W, w), syy = detail::filter_valid(yy, H, W, w), sxy = detail::filter_valid(xy, H, W, w);
    double s = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      s += ((2 * (mx[i] * my[i]) + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(C);
}

/// Mean per-frame SSIM of two [L,C,H,W] videos.
inline double video_ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& o = {}) {
  if (a.shape() != b.shape() || a.rank() != 4) throw ShapeError("video_ssim: expected matching [L,C,H,W]");
  const int64_t L = a.dim(0), n = a.size() / L;
  double sum = 0;
  for (int64_t f = 0; f < L; ++f) {
    Tensor<float> fa(Shape{a.dim(1), a.dim(2), a.dim(3)}), fb(fa.shape());
    std::copy_n(a.data() + f * n, n, fa.data());
    std::copy_n(b.data() + f * n, n, fb.data());
    sum += ssim(fa, fb, o);
  }
  return sum / static_cast<double>(L);
}

}  // namespace egowm::eval
