#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "egowm/world/clip.hpp"
#include "egowm/world/clip_io.hpp"

namespace {

using namespace egowm;
using namespace egowm::world;

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

struct Centroid {
  double area = 0, u = 0, v = 0;
};

Centroid centroid(const Tensor<float>& mask, int64_t plane_offset, int64_t S) {
  Centroid c;
  for (int64_t v = 0; v < S; ++v)
    for (int64_t u = 0; u < S; ++u)
      if (mask[plane_offset + v * S + u] > 0.5f) {
        c.area += 1;
        c.u += double(u);
        c.v += double(v);
      }
  if (c.area > 0) c.u /= c.area, c.v /= c.area;
  return c;
}

HandState parked_hand() {
  HandState h;
  h.visible = false;
  return h;
}

TEST(GenerateScene, SameSeedIsIdentical) {
  const auto a = generate_scene(42), b = generate_scene(42);
  EXPECT_EQ(a.object_pose.center, b.object_pose.center);
  EXPECT_EQ(a.object_pose.yaw, b.object_pose.yaw);
  EXPECT_EQ(a.object.half, b.object.half);
  EXPECT_EQ(a.object.color_a, b.object.color_a);
}

TEST(GenerateScene, DifferentSeedsGiveDifferentPoses) {
  int differ = 0;
  for (uint64_t s = 0; s < 100; ++s) {
    const auto a = generate_scene(s), b = generate_scene(s + 1);
    if (a.object_pose.center != b.object_pose.center || a.object_pose.yaw != b.object_pose.yaw) ++differ;
  }
  EXPECT_GE(differ, 99);
}

TEST(GenerateScene, ObjectRestsOnTableInsideFirstView) {
  for (uint64_t s = 0; s < 100; ++s) {
    const auto scene = generate_scene(s);
    EXPECT_DOUBLE_EQ(scene.object_pose.center.z(), scene.object.half.z());
    double u = 0, v = 0;
    ASSERT_TRUE(project(scene.intrinsics(32), base_head_pose(scene), scene.object_pose.center, u, v));
    EXPECT_GT(u, 0);
    EXPECT_LT(u, 31);
    EXPECT_GT(v, 0);
    EXPECT_LT(v, 31);
    EXPECT_NE(scene.object.color_a, scene.object.color_b);
  }
}

TEST(Arm, InverseKinematicsReachesTargets) {
  const ArmSpec arm;
  const auto scene = generate_scene(3);
  Rng rng(1);
  int reachable = 0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 target(rng.uniform(-0.1, 0.1), rng.uniform(-0.06, 0.1), rng.uniform(0.02, 0.15));
    const HandState h = inverse_kinematics(target, arm, scene.shoulder);
    for (double p : h.pitch) {
      EXPECT_GE(p, arm.pitch_min);
      EXPECT_LE(p, arm.pitch_max);
    }
    const Vec3 wrist = target + Vec3(0, 0, arm.lengths[2]);
    const double reach = (wrist - scene.shoulder).norm();
    const Vec3 ee = forward_kinematics(h, arm, scene.shoulder).end_effector();
    if (reach < arm.lengths[0] + arm.lengths[1] - 1e-5) {
      ++reachable;
      EXPECT_LE((ee - target).norm(), 1e-9);
    } else {
      // Clamped onto the workspace boundary along the same direction.
      const Vec3 w = ee + Vec3(0, 0, arm.lengths[2]) - scene.shoulder;
      EXPECT_NEAR(w.norm(), arm.lengths[0] + arm.lengths[1], 1e-5);
      EXPECT_LE((w.normalized() - (wrist - scene.shoulder).normalized()).norm(), 1e-9);
    }
  }
  EXPECT_GT(reachable, 50);
}

TEST(RenderFrame, RepeatedRendersAreIdentical) {
  const auto scene = generate_scene(5);
  const ArmSpec arm;
  const auto cam = base_head_pose(scene);
  const HandState hand = inverse_kinematics(scene.object_pose.center + Vec3(0, 0, 0.1), arm, scene.shoulder);
  EXPECT_TRUE(bit_equal(render_frame(scene, scene.object_pose, cam, hand, arm, 32),
                        render_frame(scene, scene.object_pose, cam, hand, arm, 32)));
  EXPECT_TRUE(bit_equal(render_hand_map(scene, cam, hand, arm, 32), render_hand_map(scene, cam, hand, arm, 32)));
}

TEST(RenderFrame, CameraMovingRightShiftsObjectLeft) {
  const ArmSpec arm;
  for (uint64_t s = 0; s < 10; ++s) {
    const auto scene = generate_scene(s);
    const auto cam = base_head_pose(scene);
    auto moved = cam;
    moved.t += 0.03 * cam.R.col(0);
    const auto a = render(scene, scene.object_pose, cam, parked_hand(), arm, 32);
    const auto b = render(scene, scene.object_pose, moved, parked_hand(), arm, 32);
    const auto ca = centroid(a.mask, 0, 32), cb = centroid(b.mask, 0, 32);
    ASSERT_GT(ca.area, 0);
    ASSERT_GT(cb.area, 0);
    EXPECT_LT(cb.u, ca.u - 0.5);
  }
}

TEST(RenderFrame, HandOccludesObject) {
  const auto scene = generate_scene(7);
  const ArmSpec arm;
  const auto cam = base_head_pose(scene);
  const Vec3 top = scene.object_pose.center + Vec3(0, 0, scene.object.half.z());
  const HandState hand = inverse_kinematics(top, arm, scene.shoulder);
  const auto bare = render(scene, scene.object_pose, cam, parked_hand(), arm, 32);
  const auto with = render(scene, scene.object_pose, cam, hand, arm, 32);
  int overlap = 0;
  for (int64_t px = 0; px < 32 * 32; ++px) {
    if (bare.mask[px] > 0 && with.hand[px] > 0) {
      ++overlap;
      EXPECT_EQ(with.mask[px], 0.0f);
      for (int c = 0; c < 3; ++c) EXPECT_EQ(with.rgb[c * 1024 + px], kHandColor[static_cast<size_t>(c)]);
    }
  }
  EXPECT_GT(overlap, 0);
}

TEST(RenderHandMap, HandBehindCameraIsBlack) {
  auto scene = generate_scene(2);
  const ArmSpec arm;
  const auto cam = base_head_pose(scene);
  const Vec3 back = -cam.R.col(2);
  scene.shoulder = cam.t + 0.3 * back;
  const Vec3 target = scene.shoulder + 0.25 * back + Vec3(0, 0, -0.1);
  const HandState hand = inverse_kinematics(target, arm, scene.shoulder);
  const auto map = render_hand_map(scene, cam, hand, arm, 32);
  for (float v : map.span()) EXPECT_EQ(v, 0.0f);
}

TEST(RenderHandMap, SilhouetteMatchesMagentaPixels) {
  const ArmSpec arm;
  for (uint64_t s = 0; s < 5; ++s) {
    const auto clip = generate_clip(s, 9, 32);
    int hand_pixels = 0;
    for (int64_t f = 0; f < 9; ++f)
      for (int64_t px = 0; px < 1024; ++px) {
        const bool magenta = clip.rgb[(f * 3 + 0) * 1024 + px] == 1.0f && clip.rgb[(f * 3 + 1) * 1024 + px] == 0.0f &&
                             clip.rgb[(f * 3 + 2) * 1024 + px] == 1.0f;
        const bool hand = clip.hand_maps[f * 1024 + px] == 1.0f;
        EXPECT_EQ(magenta, hand);
        hand_pixels += hand;
      }
    EXPECT_GT(hand_pixels, 0);
  }
}

TEST(SimulateGrasp, FarHandLeavesObjectUnchanged) {
  const auto scene = generate_scene(1);
  GraspState st;
  const Vec3 far = scene.object_pose.center + Vec3(0.3, 0, 0.2);
  const auto r = simulate_grasp(st, far, 0.4, false, scene.object, scene.object_pose);
  EXPECT_FALSE(r.attached);
  EXPECT_EQ(r.pose.center, scene.object_pose.center);
  EXPECT_EQ(r.pose.yaw, scene.object_pose.yaw);
}

TEST(SimulateGrasp, AttachedObjectTranslatesWithEndEffector) {
  const auto scene = generate_scene(1);
  GraspState st;
  const Vec3 top = scene.object_pose.center + Vec3(0, 0, scene.object.half.z() + 0.015);
  auto r = simulate_grasp(st, top, 0.3, false, scene.object, scene.object_pose);
  ASSERT_TRUE(r.attached);
  ASSERT_TRUE(r.attach_event);
  const Vec3 delta(0.04, -0.02, 0.06);
  const auto r2 = simulate_grasp(st, top + delta, 0.3, false, scene.object, r.pose);
  EXPECT_LE((r2.pose.center - (scene.object_pose.center + delta)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(r2.pose.yaw, scene.object_pose.yaw, 1e-12);
}

TEST(SimulateGrasp, ReleaseSnapsToTable) {
  const auto scene = generate_scene(4);
  GraspState st;
  const Vec3 top = scene.object_pose.center + Vec3(0, 0, scene.object.half.z());
  auto r = simulate_grasp(st, top, 0.0, false, scene.object, scene.object_pose);
  ASSERT_TRUE(r.attached);
  r = simulate_grasp(st, top + Vec3(0.05, 0.01, 0.08), 0.0, false, scene.object, r.pose);
  ASSERT_GT(r.pose.center.z(), scene.object.half.z() + 0.07);
  const Vec3 before = r.pose.center;
  r = simulate_grasp(st, top + Vec3(0.05, 0.01, 0.08), 0.0, true, scene.object, r.pose);
  EXPECT_TRUE(r.release_event);
  EXPECT_FALSE(r.attached);
  EXPECT_EQ(r.pose.center.z(), scene.object.half.z());
  EXPECT_EQ(r.pose.center.x(), before.x());
  EXPECT_EQ(r.pose.center.y(), before.y());
  // Latched: staying close without a release does not re-grab.
  const Vec3 new_top = r.pose.center + Vec3(0, 0, scene.object.half.z());
  r = simulate_grasp(st, new_top, 0.0, false, scene.object, r.pose);
  EXPECT_FALSE(r.attached);
}

TEST(GenerateClip, StreamsAndInvariants) {
  for (uint64_t s = 0; s < 6; ++s) {
    const auto c = generate_clip(s, 9, 32);
    EXPECT_EQ(c.rgb.shape(), (Shape{9, 3, 32, 32}));
    EXPECT_EQ(c.hand_maps.shape(), (Shape{9, 1, 32, 32}));
    EXPECT_EQ(c.object_masks.shape(), (Shape{9, 1, 32, 32}));
    ASSERT_EQ(c.trajectory.size(), 9u);
    EXPECT_LE((c.trajectory[0].matrix() - geometry::Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    int attaches = 0;
    for (const auto& e : c.events) attaches += e.attach;
    EXPECT_GE(attaches, 1);
    for (float v : c.object_masks.span()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
    for (float v : c.rgb.span()) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
    const auto act = c.actions();
    EXPECT_EQ(act.length(), 9);
  }
}

TEST(GenerateClip, PureFunctionOfArguments) {
  const auto a = generate_clip(11, 9, 32), b = generate_clip(11, 9, 32);
  EXPECT_TRUE(bit_equal(a.rgb, b.rgb));
  EXPECT_TRUE(bit_equal(a.hand_maps, b.hand_maps));
  EXPECT_TRUE(bit_equal(a.object_masks, b.object_masks));
  EXPECT_EQ(a.events, b.events);
  const auto c = generate_clip(12, 9, 32);
  EXPECT_FALSE(bit_equal(a.rgb, c.rgb));
}

TEST(GenerateClip, RejectsTooShortClip) { EXPECT_THROW(generate_clip(0, 1, 32), ConfigError); }

TEST(GenerateClip, AttachedObjectFollowsEndEffector) {
  for (uint64_t s = 0; s < 20; ++s) {
    const auto c = generate_clip(s, 17, 32);
    for (int64_t f = 1; f < c.length; ++f) {
      if (!c.attached[size_t(f)] || !c.attached[size_t(f - 1)]) continue;
      const auto a = centroid(c.object_masks, (f - 1) * 1024, 32), b = centroid(c.object_masks, f * 1024, 32);
      if (a.area == 0 || b.area == 0) continue;
      const double du = (b.u - a.u) - (c.ee_pixels[size_t(f)][0] - c.ee_pixels[size_t(f - 1)][0]);
      const double dv = (b.v - a.v) - (c.ee_pixels[size_t(f)][1] - c.ee_pixels[size_t(f - 1)][1]);
      EXPECT_LE(std::hypot(du, dv), 1.5) << "seed " << s << " frame " << f;
    }
  }
}

std::vector<int64_t> enumerate_windows(int64_t L, int64_t W, int64_t stride) {
  std::set<int64_t> starts;
  for (int64_t s = 0; s <= L - W; ++s)
    if (s % stride == 0) starts.insert(s);
  if (L >= W) starts.insert(L - W);
  return {starts.begin(), starts.end()};
}

TEST(Windows, StrideFiveWithClampedTail) {
  EXPECT_EQ(window_starts(17, 9), (std::vector<int64_t>{0, 5, 8}));
  for (int64_t L = 1; L <= 40; ++L)
    for (int64_t W = 1; W <= 12; ++W) EXPECT_EQ(window_starts(L, W), enumerate_windows(L, W, 5)) << L << " " << W;
}

TEST(Windows, SubClipIsReOriginedAndAligned) {
  const auto c = generate_clip(3, 17, 32);
  const auto w = window(c, 5, 9);
  EXPECT_EQ(w.length, 9);
  EXPECT_LE((w.trajectory[0].matrix() - geometry::Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(bit_equal(w.frame(0), c.frame(5)));
  for (const auto& e : w.events) EXPECT_TRUE(e.frame >= 0 && e.frame < 9);
  EXPECT_THROW(window(c, 10, 9), ConfigError);
}

TEST(ClipIo, RoundTrip) {
  const auto c = generate_clip(8, 9, 32);
  const auto dir = std::filesystem::temp_directory_path() / "egowm_clip_io";
  std::filesystem::remove_all(dir);
  write_clip(dir, c);
  for (const char* name : {"rgb.tns", "hands.tns", "masks.tns", "trajectory.csv", "intrinsics.csv", "meta"})
    EXPECT_TRUE(std::filesystem::exists(dir / name)) << name;
  const auto r = read_clip(dir);
  EXPECT_EQ(r.seed, c.seed);
  EXPECT_TRUE(bit_equal(r.rgb, c.rgb));
  EXPECT_TRUE(bit_equal(r.object_masks, c.object_masks));
  EXPECT_EQ(r.events, c.events);
  EXPECT_EQ(r.attached, c.attached);
  EXPECT_EQ(r.ee_pixels, c.ee_pixels);
  EXPECT_EQ(r.object_a, c.object_a);
  for (size_t i = 0; i < c.trajectory.size(); ++i) EXPECT_EQ(r.trajectory[i].t, c.trajectory[i].t);
  std::filesystem::remove(dir / "masks.tns");
  EXPECT_THROW(read_clip(dir), DataError);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(read_clip(dir), DataError);
}

}  // namespace
