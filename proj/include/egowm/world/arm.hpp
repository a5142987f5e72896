#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "egowm/world/scene.hpp"

namespace egowm::world {

/// Three capsule segments (upper arm, forearm, hand) hanging off a fixed shoulder.
struct ArmSpec {
  std::array<double, 3> lengths{0.18, 0.18, 0.05};
  double radius = 0.010;
  double pitch_min = -M_PI, pitch_max = M_PI;
};

/// Joint angles: shoulder yaw about world z, then three pitches measured from the horizontal
/// in the vertical plane selected by the yaw. `release` marks frames where the script opens the grip.
struct HandState {
  double yaw = 0;
  std::array<double, 3> pitch{0, 0, -M_PI / 2};
  bool release = false;
  bool visible = true;
};

struct ArmJoints {
  std::array<Vec3, 4> points;  // shoulder, elbow, wrist, end effector
  Vec3 end_effector() const { return points[3]; }
};

inline HandState clamp_limits(HandState h, const ArmSpec& arm) {
  for (auto& p : h.pitch) p = std::clamp(p, arm.pitch_min, arm.pitch_max);
  return h;
}

inline ArmJoints forward_kinematics(const HandState& h, const ArmSpec& arm, const Vec3& shoulder) {
  const Vec3 dir_h(std::cos(h.yaw), std::sin(h.yaw), 0.0);
  ArmJoints j;
  j.points[0] = shoulder;
  for (int i = 0; i < 3; ++i) {
    const double p = h.pitch[static_cast<size_t>(i)];
    const Vec3 seg = dir_h * std::cos(p) + Vec3::UnitZ() * std::sin(p);
    j.points[static_cast<size_t>(i + 1)] = j.points[static_cast<size_t>(i)] + arm.lengths[static_cast<size_t>(i)] * seg;
  }
  return j;
}

/// Analytic inverse kinematics with the hand segment pointing straight down and the elbow raised.
/// Unreachable targets are clamped to the workspace boundary along the same direction.
inline HandState inverse_kinematics(const Vec3& target, const ArmSpec& arm, const Vec3& shoulder) {
  HandState h;
  const Vec3 wrist = target + Vec3::UnitZ() * arm.lengths[2];
  const Vec3 rel = wrist - shoulder;
  h.yaw = std::atan2(rel.y(), rel.x());
  const double rho = std::hypot(rel.x(), rel.y());
  const double dz = rel.z();
  const double l1 = arm.lengths[0], l2 = arm.lengths[1];
  const double dist = std::clamp(std::hypot(rho, dz), std::abs(l1 - l2) + 1e-6, l1 + l2 - 1e-6);
  const double base = std::atan2(dz, rho);
  const double inner = std::acos(std::clamp((l1 * l1 + dist * dist - l2 * l2) / (2 * l1 * dist), -1.0, 1.0));
  const double p1 = base + inner;
  const Vec3 elbow_plane(l1 * std::cos(p1), 0, l1 * std::sin(p1));
  const Vec3 wrist_plane(dist * std::cos(base), 0, dist * std::sin(base));
  const Vec3 fore = wrist_plane - elbow_plane;
  h.pitch = {p1, std::atan2(fore.z(), fore.x()), -M_PI / 2};
  return clamp_limits(h, arm);
}

}  // namespace egowm::world
