#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "egowm/geometry/camera.hpp"
#include "egowm/world/arm.hpp"
#include "egowm/world/grasp.hpp"
#include "egowm/world/render.hpp"
#include "egowm/world/scene.hpp"

namespace egowm::world {

inline constexpr int64_t kWindowStride = 5;

struct GraspEvent {
  int64_t frame = 0;
  bool attach = true;
  bool operator==(const GraspEvent&) const = default;
};

/// Per-frame hand renders [L,1,S,S] and frame-1-relative head poses.
struct ActionScript {
  Tensor<float> hand_maps;
  geometry::Trajectory poses;
  int64_t length() const { return static_cast<int64_t>(poses.size()); }
};

/// Simulator state behind one frame: world camera pose, object pose and arm joints.
struct FrameState {
  geometry::Pose camera;
  ObjectPose object;
  HandState hand;
};

struct Clip {
  uint64_t seed = 0;
  int64_t length = 0, size = 0;
  Tensor<float> rgb;           // [L,3,S,S]
  Tensor<float> hand_maps;     // [L,1,S,S]
  Tensor<float> object_masks;  // [L,1,S,S]
  geometry::Trajectory trajectory;
  geometry::Intrinsics intrinsics;
  std::vector<GraspEvent> events;
  std::vector<bool> attached;                  // object rigidly held during the frame
  std::vector<std::array<double, 2>> ee_pixels;  // projected end-effector (u, v)
  std::vector<FrameState> states;               // not serialized; regenerate from the seed
  Color object_a{}, object_b{}, background = kBackground, table = kTableColor;

  ActionScript actions() const { return {hand_maps, trajectory}; }

  /// Frame i as [3,S,S].
  Tensor<float> frame(int64_t i) const {
    const int64_t n = 3 * size * size;
    Tensor<float> f(Shape{3, size, size});
    std::copy_n(rgb.data() + i * n, n, f.data());
    return f;
  }
};

/// [L,C,S,S] -> [C,L,S,S]
inline Tensor<float> channels_first(const Tensor<float>& frames) {
  const int64_t L = frames.dim(0), C = frames.dim(1), plane = frames.dim(2) * frames.dim(3);
  Tensor<float> out(Shape{C, L, frames.dim(2), frames.dim(3)});
  for (int64_t l = 0; l < L; ++l)
    for (int64_t c = 0; c < C; ++c) std::copy_n(frames.data() + (l * C + c) * plane, plane, out.data() + (c * L + l) * plane);
  return out;
}

/// [C,L,S,S] -> [L,C,S,S]
inline Tensor<float> frames_first(const Tensor<float>& video) {
  const int64_t C = video.dim(0), L = video.dim(1), plane = video.dim(2) * video.dim(3);
  Tensor<float> out(Shape{L, C, video.dim(2), video.dim(3)});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t l = 0; l < L; ++l) std::copy_n(video.data() + (c * L + l) * plane, plane, out.data() + (l * C + c) * plane);
  return out;
}

namespace detail {

inline double smoothstep(double w) { return w * w * (3 - 2 * w); }

struct Keyframe {
  int64_t frame;
  Vec3 ee;
};

inline Vec3 interpolate(const std::vector<Keyframe>& keys, int64_t f) {
  if (f <= keys.front().frame) return keys.front().ee;
  for (size_t i = 0; i + 1 < keys.size(); ++i) {
    const auto& a = keys[i];
    const auto& b = keys[i + 1];
    if (f <= b.frame) {
      if (b.frame == a.frame) return b.ee;
      const double w = smoothstep(static_cast<double>(f - a.frame) / static_cast<double>(b.frame - a.frame));
      return a.ee + w * (b.ee - a.ee);
    }
  }
  return keys.back().ee;
}

inline double cubic(const std::array<double, 3>& c, double s) { return s * (c[0] + s * (c[1] + s * c[2])); }

}  // namespace detail

/// Scripted head motion: base look-at pose plus low-order polynomial offsets in position, yaw and pitch.
struct HeadScript {
  std::array<std::array<double, 3>, 3> position{};
  std::array<double, 3> yaw{}, pitch{};

  static HeadScript random(Rng& rng) {
    HeadScript h;
    const std::array<double, 3> amp{0.03, 0.02, 0.01};
    for (auto& axis : h.position)
      for (size_t k = 0; k < 3; ++k) axis[k] = rng.uniform(-amp[k], amp[k]);
    for (size_t k = 0; k < 3; ++k) {
      h.yaw[k] = rng.uniform(-0.06, 0.06) / static_cast<double>(k + 1);
      h.pitch[k] = rng.uniform(-0.05, 0.05) / static_cast<double>(k + 1);
    }
    return h;
  }

  geometry::Pose at(const SceneSpec& scene, double s) const {
    geometry::Pose p = base_head_pose(scene);
    for (int i = 0; i < 3; ++i) p.t(i) += detail::cubic(position[static_cast<size_t>(i)], s);
    p.R = p.R * geometry::rotation_about(Vec3::UnitY(), detail::cubic(yaw, s)) *
          geometry::rotation_about(Vec3::UnitX(), detail::cubic(pitch, s));
    return p;
  }
};

/// Reach, grasp from the top, carry to a new spot, release slightly above the table and retreat.
struct HandScript {
  std::vector<detail::Keyframe> keys;
  int64_t release_after = 0;

  static HandScript build(const SceneSpec& scene, Rng& rng, int64_t L) {
    const Vec3 top = scene.object_pose.center + Vec3(0, 0, scene.object.half.z());
    Vec3 dest = top;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double side = rng.uniform() < 0.5 ? 0.0 : M_PI;
      const double ang = side + rng.uniform(-0.5, 0.5), len = rng.uniform(0.09, 0.13);
      const Vec3 cand = top + Vec3(len * std::cos(ang), len * std::sin(ang), 0);
      if (cand.x() > -0.10 && cand.x() < 0.08 && cand.y() > -0.06 && cand.y() < 0.08) {
        dest = cand;
        break;
      }
    }
    const double last = static_cast<double>(L - 1);
    const auto at = [&](double s) { return static_cast<int64_t>(std::lround(s * last)); };
    HandScript h;
    const int64_t fa = at(0.25), fp = at(0.75);
    h.keys = {{0, top + Vec3(0.10, -0.08, 0.10)},
              {fa, top},
              {(fa + fp) / 2, 0.5 * (top + dest) + Vec3(0, 0, 0.07)},
              {fp, dest + Vec3(0, 0, 0.01)},
              {L - 1, dest + Vec3(0.06, -0.06, 0.10)}};
    h.release_after = fp;
    return h;
  }
};

/// Procedural clip: a pure function of (seed, L, S).
inline Clip generate_clip(uint64_t seed, int64_t L, int64_t S, const ArmSpec& arm = {}) {
  if (L < 2) throw ConfigError("generate_clip: L must be at least 2");
  if (S < 8) throw ConfigError("generate_clip: S must be at least 8");
  const SceneSpec scene = generate_scene(seed);
  Rng rng = Rng::derive(seed, 0xc11b);
  const HeadScript head = HeadScript::random(rng);
  const HandScript script = HandScript::build(scene, rng, L);
  const auto K = scene.intrinsics(S);

  Clip clip;
  clip.seed = seed;
  clip.length = L;
  clip.size = S;
  clip.intrinsics = K;
  clip.object_a = scene.object.color_a;
  clip.object_b = scene.object.color_b;
  clip.background = scene.background;
  clip.table = scene.table;
  clip.rgb = Tensor<float>(Shape{L, 3, S, S});
  clip.hand_maps = Tensor<float>(Shape{L, 1, S, S});
  clip.object_masks = Tensor<float>(Shape{L, 1, S, S});

  geometry::Trajectory world;
  GraspState grasp;
  ObjectPose object = scene.object_pose;
  const int64_t plane = S * S;
  for (int64_t f = 0; f < L; ++f) {
    const double s = static_cast<double>(f) / static_cast<double>(L - 1);
    const geometry::Pose cam = head.at(scene, s);
    world.push_back(cam);
    HandState hand = inverse_kinematics(detail::interpolate(script.keys, f), arm, scene.shoulder);
    hand.release = f > script.release_after;
    const Vec3 ee = forward_kinematics(hand, arm, scene.shoulder).end_effector();
    const GraspResult g = simulate_grasp(grasp, ee, hand.yaw, hand.release, scene.object, object);
    object = g.pose;
    if (g.attach_event) clip.events.push_back({f, true});
    if (g.release_event) clip.events.push_back({f, false});
    clip.attached.push_back(g.attached);
    double u = 0, v = 0;
    project(K, cam, ee, u, v);
    clip.ee_pixels.push_back({u, v});
    clip.states.push_back({cam, object, hand});

    const RenderPass pass = render(scene, object, cam, hand, arm, S);
    std::copy_n(pass.rgb.data(), 3 * plane, clip.rgb.data() + f * 3 * plane);
    std::copy_n(pass.hand.data(), plane, clip.hand_maps.data() + f * plane);
    std::copy_n(pass.mask.data(), plane, clip.object_masks.data() + f * plane);
  }
  clip.trajectory = geometry::relative_trajectory(world);
  return clip;
}

/// Sliding-window starts: every `stride` frames while the window fits, plus a final start clamped to L - W.
inline std::vector<int64_t> window_starts(int64_t L, int64_t W, int64_t stride = kWindowStride) {
  if (W < 1 || stride < 1) throw ConfigError("window_starts: window and stride must be positive");
  std::vector<int64_t> starts;
  if (W > L) return starts;
  int64_t s = 0;
  for (; s + W <= L; s += stride) starts.push_back(s);
  if (starts.back() + W < L) starts.push_back(L - W);
  return starts;
}

/// Sub-clip [start, start + W) with poses re-expressed relative to its own first frame.
inline Clip window(const Clip& c, int64_t start, int64_t W) {
  if (start < 0 || start + W > c.length) throw ConfigError("window: range outside clip");
  Clip w = c;
  w.length = W;
  const int64_t frame3 = 3 * c.size * c.size, frame1 = c.size * c.size;
  w.rgb = Tensor<float>(Shape{W, 3, c.size, c.size});
  w.hand_maps = Tensor<float>(Shape{W, 1, c.size, c.size});
  w.object_masks = Tensor<float>(Shape{W, 1, c.size, c.size});
  std::copy_n(c.rgb.data() + start * frame3, W * frame3, w.rgb.data());
  std::copy_n(c.hand_maps.data() + start * frame1, W * frame1, w.hand_maps.data());
  std::copy_n(c.object_masks.data() + start * frame1, W * frame1, w.object_masks.data());
  w.trajectory.clear();
  for (int64_t i = 0; i < W; ++i)
    w.trajectory.push_back(geometry::relative_pose(c.trajectory[static_cast<size_t>(start + i)], c.trajectory[static_cast<size_t>(start)]));
  w.events.clear();
  for (const auto& e : c.events)
    if (e.frame >= start && e.frame < start + W) w.events.push_back({e.frame - start, e.attach});
  w.attached.assign(c.attached.begin() + start, c.attached.begin() + start + W);
  w.ee_pixels.assign(c.ee_pixels.begin() + start, c.ee_pixels.begin() + start + W);
  if (static_cast<int64_t>(c.states.size()) == c.length) w.states.assign(c.states.begin() + start, c.states.begin() + start + W);
  return w;
}

}  // namespace egowm::world
