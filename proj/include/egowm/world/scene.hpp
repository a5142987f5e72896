#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "egowm/core/random.hpp"
#include "egowm/geometry/camera.hpp"

namespace egowm::world {

using geometry::Mat3;
using geometry::Vec3;

using Color = std::array<float, 3>;

inline constexpr Color kBackground{0.12f, 0.14f, 0.18f};
inline constexpr Color kTableColor{0.62f, 0.52f, 0.40f};
inline constexpr Color kHandColor{1.0f, 0.0f, 1.0f};
inline constexpr std::array<Color, 6> kObjectPalette{{
    {0.95f, 0.55f, 0.10f},
    {0.95f, 0.88f, 0.15f},
    {0.15f, 0.75f, 0.30f},
    {0.10f, 0.70f, 0.85f},
    {0.20f, 0.30f, 0.95f},
    {0.85f, 0.10f, 0.12f},
}};

enum class Shape3 { box, cylinder };

/// Upright rigid object pose: center of the body and yaw about world z.
struct ObjectPose {
  Vec3 center = Vec3::Zero();
  double yaw = 0;
};

/// Box half extents are (half.x, half.y, half.z); a cylinder uses half.x as radius and half.z as half height.
struct ObjectSpec {
  Shape3 shape = Shape3::box;
  Vec3 half{0.06, 0.03, 0.025};
  Color color_a = kObjectPalette[0];
  Color color_b = kObjectPalette[1];
  double checker = 0.03;
};

struct SceneSpec {
  uint64_t seed = 0;
  double table_half_x = 0.45, table_half_y = 0.35;  // table is the plane z = 0
  Color background = kBackground;
  Color table = kTableColor;
  ObjectSpec object;
  ObjectPose object_pose;
  Vec3 head_position{0.0, -0.27, 0.34};
  Vec3 head_target{0.0, -0.01, 0.0};
  Vec3 shoulder{0.22, -0.12, 0.14};
  double fov = 1.05;  // radians, horizontal

  geometry::Intrinsics intrinsics(int64_t size) const { return geometry::Intrinsics::from_fov(size, fov); }
};

inline Mat3 yaw_rotation(double yaw) { return geometry::rotation_about(Vec3::UnitZ(), yaw); }

/// Camera-to-world rotation for an OpenCV-style camera (x right, y down, z forward).
inline Mat3 look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 fwd = (target - eye).normalized();
  const Vec3 right = fwd.cross(Vec3::UnitZ()).normalized();
  const Vec3 down = fwd.cross(right);
  Mat3 R;
  R.col(0) = right;
  R.col(1) = down;
  R.col(2) = fwd;
  return R;
}

inline geometry::Pose base_head_pose(const SceneSpec& s) { return {look_at(s.head_position, s.head_target), s.head_position}; }

/// Projects a world point; returns false when it lies behind the camera.
inline bool project(const geometry::Intrinsics& K, const geometry::Pose& cam, const Vec3& p, double& u, double& v) {
  const Vec3 c = cam.R.transpose() * (p - cam.t);
  if (c.z() <= 1e-9) return false;
  u = K.fx * c.x() / c.z() + K.cx;
  v = K.fy * c.y() / c.z() + K.cy;
  return true;
}

/// Deterministic scene for a seed: object shape, size, colors and initial resting pose.
/// The object center is re-drawn until it projects well inside the first view.
inline SceneSpec generate_scene(uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x5ce9e);
  SceneSpec s;
  s.seed = seed;
  ObjectSpec& o = s.object;
  o.shape = rng.uniform() < 0.7 ? Shape3::box : Shape3::cylinder;
  if (o.shape == Shape3::box)
    o.half = Vec3(rng.uniform(0.055, 0.075), rng.uniform(0.026, 0.036), rng.uniform(0.022, 0.032));
  else
    o.half = Vec3(rng.uniform(0.032, 0.042), 0.0, rng.uniform(0.035, 0.045));
  const auto a = rng.uniform_int(0, static_cast<int64_t>(kObjectPalette.size()) - 1);
  auto b = rng.uniform_int(0, static_cast<int64_t>(kObjectPalette.size()) - 2);
  if (b >= a) ++b;
  o.color_a = kObjectPalette[static_cast<size_t>(a)];
  o.color_b = kObjectPalette[static_cast<size_t>(b)];
  o.checker = rng.uniform(0.025, 0.035);

  const auto K = s.intrinsics(32);
  const auto cam = base_head_pose(s);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const Vec3 c(rng.uniform(-0.07, 0.05), rng.uniform(-0.05, 0.06), o.half.z());
    double u = 0, v = 0;
    if (project(K, cam, c, u, v) && u > 8 && u < 24 && v > 8 && v < 24) {
      s.object_pose = {c, rng.uniform(-M_PI / 2, M_PI / 2)};
      break;
    }
  }
  return s;
}

}  // namespace egowm::world
