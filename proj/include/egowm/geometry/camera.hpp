#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "egowm/core/error.hpp"
#include "egowm/core/tensor.hpp"

namespace egowm::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole intrinsics in pixels. Pixel coordinates are zero-indexed at pixel centers.
struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;

  void validate() const {
    if (!(fx > 0) || !(fy > 0)) throw DataError("intrinsics: focal lengths must be positive");
  }
  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
  /// Closed-form inverse of the upper-triangular K.
  Mat3 inverse() const {
    validate();
    Mat3 k;
    k << 1 / fx, 0, -cx / fx, 0, 1 / fy, -cy / fy, 0, 0, 1;
    return k;
  }
  /// Square image of side S with the given horizontal field of view.
  static Intrinsics from_fov(int64_t size, double fov_rad) {
    const double f = 0.5 * static_cast<double>(size) / std::tan(0.5 * fov_rad);
    const double c = 0.5 * static_cast<double>(size - 1);
    return {f, f, c, c};
  }
};

/// Rigid transform x -> R x + t. Camera poses are camera-to-reference maps, so t is the
/// optical center expressed in the reference frame.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return R * x + t; }
  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
  Pose operator*(const Pose& o) const { return {R * o.R, R * o.t + t}; }
  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = R;
    m.block<3, 1>(0, 3) = t;
    return m;
  }
  static Pose from_matrix(const Mat4& m) { return {m.block<3, 3>(0, 0), m.block<3, 1>(0, 3)}; }

  bool is_rotation_valid(double tol = 1e-6) const {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
  }
  void validate(double tol = 1e-6) const {
    if (!R.allFinite() || !t.allFinite()) throw NumericError("pose contains non-finite values");
    if (!is_rotation_valid(tol)) throw NumericError("pose rotation is not orthonormal with det +1");
  }
};

using Trajectory = std::vector<Pose>;

inline Mat3 rotation_about(const Vec3& axis, double angle) { return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix(); }

/// Geodesic angle of a rotation, radians. The atan2 form stays accurate near the identity.
inline double rotation_angle(const Mat3& R) {
  const Vec3 w(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * w.norm(), 0.5 * (R.trace() - 1.0));
}

namespace detail {
/// Rounds to a 2^-32 grid so relative poses computed through different world gauges agree bit-for-bit.
inline double snap(double v) {
  constexpr double kGrid = 4294967296.0;
  const double r = std::nearbyint(v * kGrid) / kGrid;
  return r == 0.0 ? 0.0 : r;
}
}  // namespace detail

/// Pose of camera t relative to camera 1: maps frame-t camera coordinates into the
/// frame-1 camera frame. Entries are snapped to a 2^-32 grid.
inline Pose relative_pose(const Pose& pose_t, const Pose& pose_1) {
  pose_t.validate();
  pose_1.validate();
  Pose rel = pose_1.inverse() * pose_t;
  for (int i = 0; i < 3; ++i) {
    rel.t(i) = detail::snap(rel.t(i));
    for (int j = 0; j < 3; ++j) rel.R(i, j) = detail::snap(rel.R(i, j));
  }
  return rel;
}

inline Trajectory relative_trajectory(const Trajectory& world) {
  Trajectory out;
  out.reserve(world.size());
  for (const auto& p : world) out.push_back(relative_pose(p, world.front()));
  return out;
}

/// How a pixel's ray direction is formed from the pose.
enum class RayMode {
  literal,        ///< d = R K^-1 [u v 1]^T + t, exactly as the conditioning formula is written
  rotation_only,  ///< d = R K^-1 [u v 1]^T
};

inline Vec3 ray_direction(const Intrinsics& K, const Pose& pose, double u, double v, RayMode mode = RayMode::literal) {
  pose.validate();
  Vec3 d = pose.R * (K.inverse() * Vec3(u, v, 1.0));
  if (mode == RayMode::literal) d += pose.t;
  return d;
}

/// Per-pixel Plücker field [6,H,W]: channels (o x d, d) with o = t the optical center.
template <typename T = float>
Tensor<T> plucker_field(const Intrinsics& K, const Pose& pose, int64_t height, int64_t width, RayMode mode = RayMode::literal) {
  pose.validate();
  const Mat3 kinv = K.inverse();
  const Mat3 rk = pose.R * kinv;
  const Vec3 o = pose.t;
  Tensor<T> out(Shape{6, height, width});
  const int64_t plane = height * width;
  for (int64_t v = 0; v < height; ++v)
    for (int64_t u = 0; u < width; ++u) {
      Vec3 d = rk * Vec3(static_cast<double>(u), static_cast<double>(v), 1.0);
      if (mode == RayMode::literal) d += pose.t;
      const Vec3 m = o.cross(d);
      const int64_t px = v * width + u;
      for (int c = 0; c < 3; ++c) {
        out[c * plane + px] = static_cast<T>(m(c));
        out[(3 + c) * plane + px] = static_cast<T>(d(c));
      }
    }
  return out;
}

/// Stacks per-frame fields of a frame-1-relative trajectory into [6,L,H,W].
template <typename T = float>
Tensor<T> plucker_volume(const Intrinsics& K, const Trajectory& rel, int64_t height, int64_t width, RayMode mode = RayMode::literal) {
  const auto L = static_cast<int64_t>(rel.size());
  if (L < 1) throw DataError("plucker_volume: empty trajectory");
  Tensor<T> out(Shape{6, L, height, width});
  const int64_t plane = height * width;
  for (int64_t f = 0; f < L; ++f) {
    auto field = plucker_field<T>(K, rel[static_cast<size_t>(f)], height, width, mode);
    for (int64_t c = 0; c < 6; ++c) std::copy_n(field.data() + c * plane, plane, out.data() + (c * L + f) * plane);
  }
  return out;
}

}  // namespace egowm::geometry
