#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "egowm/core/tensor.hpp"
#include "egowm/world/scene.hpp"

namespace egowm::eval {

inline constexpr int64_t kMinOrientationArea = 20;
inline constexpr double kMinAnisotropy = 0.15;
inline constexpr int64_t kHandMinPixels = 20;
inline constexpr double kHandColorTolerance = 0.25;

/// Binary H x W view over a [H,W] or [1,H,W] tensor.
class MaskFrame {
 public:
  MaskFrame(const Tensor<float>& t) : t_(&t) {
    if (!(t.rank() == 2 || (t.rank() == 3 && t.dim(0) == 1))) throw ShapeError("mask: expected [H,W] or [1,H,W], got " + egowm::to_string(t.shape()));
    for (int64_t i = 0; i < t.size(); ++i)
      if (t[i] != 0.0f && t[i] != 1.0f) throw DataError("mask: values must be 0 or 1");
  }
  int64_t height() const { return t_->dim(-2); }
  int64_t width() const { return t_->dim(-1); }
  bool at(int64_t y, int64_t x) const { return (*t_)[y * width() + x] != 0.0f; }
  int64_t area() const {
    int64_t a = 0;
    for (int64_t i = 0; i < t_->size(); ++i) a += (*t_)[i] != 0.0f;
    return a;
  }

 private:
  const Tensor<float>* t_;
};

/// (c_x, c_y): mean column and row of the foreground; nullopt for an empty mask.
inline std::optional<std::array<double, 2>> mask_centroid(const MaskFrame& m) {
  double sx = 0, sy = 0;
  int64_t n = 0;
  for (int64_t y = 0; y < m.height(); ++y)
    for (int64_t x = 0; x < m.width(); ++x)
      if (m.at(y, x)) {
        sx += static_cast<double>(x);
        sy += static_cast<double>(y);
        ++n;
      }
  if (n == 0) return std::nullopt;
  return std::array<double, 2>{sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

/// Centroid distance over the image diagonal. Both empty -> 0, exactly one empty -> 1.
inline double ope(const MaskFrame& gt, const MaskFrame& gen) {
  if (gt.height() != gen.height() || gt.width() != gen.width()) throw ShapeError("ope: mask dimensions differ");
  const auto a = mask_centroid(gt), b = mask_centroid(gen);
  if (!a && !b) return 0.0;
  if (!a || !b) return 1.0;
  const double H = static_cast<double>(gt.height()), W = static_cast<double>(gt.width());
  return std::hypot((*a)[0] - (*b)[0], (*a)[1] - (*b)[1]) / std::sqrt(H * H + W * W);
}

struct OrientationEstimate {
  double theta = 0;  // radians, (-pi/2, pi/2]
  double alpha = 0;
  int64_t area = 0;
  bool valid = false;
};

/// Principal axis from second-order central moments, with an anisotropy score.
inline OrientationEstimate mask_orientation(const MaskFrame& m) {
  OrientationEstimate o;
  const auto c = mask_centroid(m);
  if (!c) return o;
  double m20 = 0, m02 = 0, m11 = 0;
  for (int64_t y = 0; y < m.height(); ++y)
    for (int64_t x = 0; x < m.width(); ++x)
      if (m.at(y, x)) {
        const double dx = static_cast<double>(x) - (*c)[0], dy = static_cast<double>(y) - (*c)[1];
        m20 += dx * dx;
        m02 += dy * dy;
        m11 += dx * dy;
        ++o.area;
      }
  o.theta = 0.5 * std::atan2(2 * m11, m20 - m02);
  if (o.theta <= -M_PI / 2) o.theta += M_PI;
  const double mean = 0.5 * (m20 + m02), root = std::sqrt(0.25 * (m20 - m02) * (m20 - m02) + m11 * m11);
  const double l1 = mean + root, l2 = mean - root;
  o.alpha = (l1 - l2) / (l1 + l2 + 1e-12);
  o.valid = o.area >= kMinOrientationArea && o.alpha >= kMinAnisotropy;
  return o;
}

/// Axis difference folded into [0, 90] degrees.
inline double fold_axis_degrees(double theta_a, double theta_b) {
  const double d = std::fmod(std::abs(theta_a - theta_b), M_PI);
  return std::min(d, M_PI - d) * 180.0 / M_PI;
}

/// Orientation error in degrees; nullopt when either orientation fails the validity gate.
inline std::optional<double> ooe(const MaskFrame& gt, const MaskFrame& gen) {
  if (gt.height() != gen.height() || gt.width() != gen.width()) throw ShapeError("ooe: mask dimensions differ");
  const auto a = mask_orientation(gt), b = mask_orientation(gen);
  if (!a.valid || !b.valid) return std::nullopt;
  return fold_axis_degrees(a.theta, b.theta);
}

/// Colors a rendered frame can contain; pixels are labeled by the nearest one.
struct Palette {
  world::Color background = world::kBackground, table = world::kTableColor, object_a{}, object_b{};
};

/// Object mask [1,H,W] of a frame [3,H,W]: pixels nearest to either object color.
inline Tensor<float> segment_object(const Tensor<float>& frame, const Palette& p) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("segment_object: expected [3,H,W], got " + egowm::to_string(frame.shape()));
  const int64_t plane = frame.dim(1) * frame.dim(2);
  const std::array<world::Color, 5> colors{p.background, p.table, world::kHandColor, p.object_a, p.object_b};
  Tensor<float> out(Shape{1, frame.dim(1), frame.dim(2)});
  for (int64_t i = 0; i < plane; ++i) {
    size_t best = 0;
    double best_d = 1e300;
    for (size_t k = 0; k < colors.size(); ++k) {
      double d = 0;
      for (int64_t c = 0; c < 3; ++c) {
        const double e = static_cast<double>(frame[c * plane + i]) - colors[k][static_cast<size_t>(c)];
        d += e * e;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out[i] = best >= 3 ? 1.0f : 0.0f;
  }
  return out;
}

/// Pixels within `tol` of the hand color in every channel: [1,H,W].
inline Tensor<float> hand_pixels(const Tensor<float>& frame, double tol = kHandColorTolerance) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("hand_pixels: expected [3,H,W], got " + egowm::to_string(frame.shape()));
  const int64_t plane = frame.dim(1) * frame.dim(2);
  Tensor<float> out(Shape{1, frame.dim(1), frame.dim(2)});
  for (int64_t i = 0; i < plane; ++i) {
    bool hit = true;
    for (int64_t c = 0; c < 3; ++c) hit = hit && std::abs(static_cast<double>(frame[c * plane + i]) - world::kHandColor[static_cast<size_t>(c)]) <= tol;
    out[i] = hit ? 1.0f : 0.0f;
  }
  return out;
}

inline bool hand_detected(const Tensor<float>& frame, double tol = kHandColorTolerance) {
  return MaskFrame(hand_pixels(frame, tol)).area() >= kHandMinPixels;
}

/// 1 - detections / instances over frames where the ground truth has a hand; nullopt without instances.
inline std::optional<double> missing_ratio(const std::vector<bool>& gt_present, const std::vector<bool>& detected) {
  if (gt_present.size() != detected.size()) throw DataError("missing_ratio: sequence lengths differ");
  int64_t n = 0, hits = 0;
  for (size_t i = 0; i < gt_present.size(); ++i)
    if (gt_present[i]) {
      ++n;
      hits += detected[i];
    }
  if (n == 0) return std::nullopt;
  return 1.0 - static_cast<double>(hits) / static_cast<double>(n);
}

/// RMSE between two equally shaped mask sequences (any layout with matching shapes).
inline double seg_rmse(const std::vector<Tensor<float>>& gt, const std::vector<Tensor<float>>& gen) {
  if (gt.size() != gen.size() || gt.empty()) throw DataError("seg_rmse: sequence lengths differ or are empty");
  double se = 0;
  int64_t n = 0;
  for (size_t t = 0; t < gt.size(); ++t) {
    if (gt[t].shape() != gen[t].shape()) throw ShapeError("seg_rmse: frame shapes differ");
    for (int64_t i = 0; i < gt[t].size(); ++i) {
      const double d = static_cast<double>(gt[t][i]) - gen[t][i];
      se += d * d;
    }
    n += gt[t].size();
  }
  return std::sqrt(se / static_cast<double>(n));
}

}  // namespace egowm::eval
