#pragma once

#include <algorithm>
#include <cmath>

#include "egowm/world/scene.hpp"

namespace egowm::world {

inline constexpr double kGraspRadius = 0.02;

/// Distance from a world point to the object's surface (zero inside the body).
inline double distance_to_object(const Vec3& p, const ObjectSpec& spec, const ObjectPose& pose) {
  const Vec3 q = yaw_rotation(pose.yaw).transpose() * (p - pose.center);
  if (spec.shape == Shape3::box) {
    const Vec3 d = (q.cwiseAbs() - spec.half).cwiseMax(0.0);
    return d.norm();
  }
  const double radial = std::max(0.0, std::hypot(q.x(), q.y()) - spec.half.x());
  const double axial = std::max(0.0, std::abs(q.z()) - spec.half.z());
  return std::hypot(radial, axial);
}

/// Kinematic grasp bookkeeping carried across frames.
struct GraspState {
  bool attached = false;
  bool latched = false;  // set on release, cleared once the hand leaves the grasp radius
  Vec3 offset = Vec3::Zero();
  double yaw_offset = 0;
};

struct GraspResult {
  bool attached = false;
  bool attach_event = false;
  bool release_event = false;
  ObjectPose pose;
};

/// One frame of contact-driven object dynamics. The end-effector frame is the point `ee` with yaw `ee_yaw`.
/// Within the grasp radius the object attaches rigidly to that frame; a scripted release drops it onto the
/// table plane where it was let go.
inline GraspResult simulate_grasp(GraspState& state, const Vec3& ee, double ee_yaw, bool release, const ObjectSpec& spec,
                                  const ObjectPose& object) {
  GraspResult r;
  r.pose = object;
  const double dist = distance_to_object(ee, spec, object);
  if (state.attached) {
    if (release) {
      state.attached = false;
      state.latched = true;
      r.release_event = true;
      r.pose.center.z() = spec.half.z();
    } else {
      r.pose.center = ee + yaw_rotation(ee_yaw) * state.offset;
      r.pose.yaw = ee_yaw + state.yaw_offset;
    }
  } else {
    if (state.latched && dist > kGraspRadius) state.latched = false;
    if (!state.latched && !release && dist <= kGraspRadius) {
      state.attached = true;
      state.offset = yaw_rotation(ee_yaw).transpose() * (object.center - ee);
      state.yaw_offset = object.yaw - ee_yaw;
      r.attach_event = true;
    }
  }
  r.attached = state.attached;
  return r;
}

}  // namespace egowm::world
