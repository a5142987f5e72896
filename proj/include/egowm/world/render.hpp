#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "egowm/core/tensor.hpp"
#include "egowm/world/arm.hpp"
#include "egowm/world/scene.hpp"

namespace egowm::world {

namespace detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Nearest positive hit along a ray against an upright box (local frame).
inline double hit_box(const Vec3& o, const Vec3& d, const Vec3& half) {
  double t0 = -kInf, t1 = kInf;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d(i)) < 1e-15) {
      if (std::abs(o(i)) > half(i)) return kInf;
      continue;
    }
    double a = (-half(i) - o(i)) / d(i), b = (half(i) - o(i)) / d(i);
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  if (t0 > t1 || t1 <= 0) return kInf;
  return t0 > 0 ? t0 : kInf;
}

inline double hit_cylinder(const Vec3& o, const Vec3& d, double radius, double half_h) {
  double best = kInf;
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = 2 * (o.x() * d.x() + o.y() * d.y());
    const double c = o.x() * o.x() + o.y() * o.y() - radius * radius;
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double s = (-b - std::sqrt(disc)) / (2 * a);
      if (s > 0 && std::abs(o.z() + s * d.z()) <= half_h) best = s;
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (double zc : {-half_h, half_h}) {
      const double s = (zc - o.z()) / d.z();
      if (s > 0 && s < best && std::hypot(o.x() + s * d.x(), o.y() + s * d.y()) <= radius) best = s;
    }
  }
  return best;
}

/// Squared distance between the ray o + s d (0 <= s <= smax) and the segment [a, b].
inline double ray_segment_dist2(const Vec3& o, const Vec3& d, double smax, const Vec3& a, const Vec3& b) {
  const Vec3 d1 = d * smax, d2 = b - a, r = o - a;
  const double aa = d1.squaredNorm(), ee = d2.squaredNorm(), f = d2.dot(r);
  const double c = d1.dot(r), bb = d1.dot(d2);
  const double denom = aa * ee - bb * bb;
  double s = denom > 1e-18 ? std::clamp((bb * f - c * ee) / denom, 0.0, 1.0) : 0.0;
  double t = (bb * s + f) / ee;
  if (t < 0) {
    t = 0;
    s = std::clamp(-c / aa, 0.0, 1.0);
  } else if (t > 1) {
    t = 1;
    s = std::clamp((bb - c) / aa, 0.0, 1.0);
  }
  return ((o + d1 * s) - (a + d2 * t)).squaredNorm();
}

}  // namespace detail

/// One rasterization pass: RGB [3,S,S], hand map [1,S,S] and visible-object mask [1,S,S].
struct RenderPass {
  Tensor<float> rgb, hand, mask;
};

/// Per-pixel ray casting with layered compositing: background, table, object, then the arm on top.
inline RenderPass render(const SceneSpec& scene, const ObjectPose& object, const geometry::Pose& cam,
                         const HandState& hand, const ArmSpec& arm, int64_t size) {
  const auto K = scene.intrinsics(size);
  const Mat3 rk = cam.R * K.inverse();
  const Mat3 obj_rot_t = yaw_rotation(object.yaw).transpose();
  const ArmJoints joints = forward_kinematics(hand, arm, scene.shoulder);
  const ObjectSpec& spec = scene.object;

  RenderPass out{Tensor<float>(Shape{3, size, size}), Tensor<float>(Shape{1, size, size}), Tensor<float>(Shape{1, size, size})};
  const int64_t plane = size * size;
  for (int64_t v = 0; v < size; ++v)
    for (int64_t u = 0; u < size; ++u) {
      const Vec3 o = cam.t;
      const Vec3 d = rk * Vec3(static_cast<double>(u), static_cast<double>(v), 1.0);
      Color color = scene.background;
      bool is_object = false, is_hand = false;

      if (d.z() < 0) {
        const double s = -o.z() / d.z();
        const Vec3 p = o + s * d;
        if (s > 0 && std::abs(p.x()) <= scene.table_half_x && std::abs(p.y()) <= scene.table_half_y) color = scene.table;
      }

      const Vec3 lo = obj_rot_t * (o - object.center), ld = obj_rot_t * d;
      const double s_obj = spec.shape == Shape3::box ? detail::hit_box(lo, ld, spec.half)
                                                     : detail::hit_cylinder(lo, ld, spec.half.x(), spec.half.z());
      if (std::isfinite(s_obj)) {
        const Vec3 q = lo + s_obj * ld + spec.half;
        const auto cell = [&](double x) { return static_cast<int64_t>(std::floor(x / spec.checker)); };
        const bool odd = ((cell(q.x()) + cell(q.y()) + cell(q.z())) & 1) != 0;
        color = odd ? spec.color_b : spec.color_a;
        is_object = true;
      }

      if (hand.visible) {
        const double r2 = arm.radius * arm.radius;
        for (size_t i = 0; i < 3 && !is_hand; ++i)
          is_hand = detail::ray_segment_dist2(o, d, 50.0, joints.points[i], joints.points[i + 1]) <= r2;
      }
      if (is_hand) {
        color = kHandColor;
        is_object = false;
      }

      const int64_t px = v * size + u;
      for (int c = 0; c < 3; ++c) out.rgb[c * plane + px] = color[static_cast<size_t>(c)];
      out.hand[px] = is_hand ? 1.0f : 0.0f;
      out.mask[px] = is_object ? 1.0f : 0.0f;
    }
  return out;
}

inline Tensor<float> render_frame(const SceneSpec& scene, const ObjectPose& object, const geometry::Pose& cam, const HandState& hand,
                                  const ArmSpec& arm, int64_t size) {
  return render(scene, object, cam, hand, arm, size).rgb;
}

/// White arm silhouette on black, pixel-aligned with render_frame.
inline Tensor<float> render_hand_map(const SceneSpec& scene, const geometry::Pose& cam, const HandState& hand, const ArmSpec& arm,
                                     int64_t size) {
  return render(scene, scene.object_pose, cam, hand, arm, size).hand;
}

}  // namespace egowm::world
