#include <gtest/gtest.h>

#include <sstream>

#include "egowm/eval/report.hpp"
#include "support/metric_oracles.hpp"

namespace {

using namespace egowm;
using namespace egowm::eval;
using geometry::Mat3;
using geometry::Vec3;

Tensor<float> mask(int64_t H, int64_t W, const std::vector<std::pair<int64_t, int64_t>>& xy) {
  Tensor<float> m(Shape{H, W});
  for (auto [x, y] : xy) m[y * W + x] = 1.0f;
  return m;
}

Tensor<float> rect(int64_t H, int64_t W, int64_t x0, int64_t y0, int64_t w, int64_t h) {
  Tensor<float> m(Shape{H, W});
  for (int64_t y = y0; y < y0 + h; ++y)
    for (int64_t x = x0; x < x0 + w; ++x) m[y * W + x] = 1.0f;
  return m;
}

Tensor<float> disk(int64_t H, int64_t W, double cx, double cy, double r) {
  Tensor<float> m(Shape{H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) m[y * W + x] = std::hypot(x - cx, y - cy) <= r ? 1.0f : 0.0f;
  return m;
}

TEST(Psnr, IdenticalIsCapped) {
  Rng rng(1);
  const auto a = rng.uniform_tensor<float>(Shape{3, 16, 16}, 0.0, 1.0);
  EXPECT_EQ(psnr(a, a), 99.0);
}

TEST(Psnr, ConstantOffset) {
  Tensor<float> a(Shape{3, 8, 8}, 0.2f), b(Shape{3, 8, 8}, 0.3f);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
}

TEST(Psnr, MatchesDirectMse) {
  Rng rng(2);
  const auto a = rng.uniform_tensor<float>(Shape{2, 5, 7}, 0.0, 1.0), b = rng.uniform_tensor<float>(Shape{2, 5, 7}, 0.0, 1.0);
  double se = 0;
  for (int64_t i = 0; i < a.size(); ++i) se += std::pow(double(a[i]) - double(b[i]), 2);
  EXPECT_NEAR(psnr(a, b), 10 * std::log10(a.size() / se), 1e-12);
}

TEST(Psnr, RejectsShapeMismatch) { EXPECT_THROW(psnr(Tensor<float>(Shape{2, 2}), Tensor<float>(Shape{4})), ShapeError); }

TEST(Ssim, IdenticalIsOne) {
  Rng rng(3);
  const auto a = rng.uniform_tensor<float>(Shape{3, 20, 20}, 0.0, 1.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, NegativeOnMidGrayIsAnticorrelated) {
  Tensor<float> a(Shape{24, 24}, 0.5f);
  for (int64_t y = 4; y < 20; ++y)
    for (int64_t x = 4; x < 12; ++x) a[y * 24 + x] = 0.9f;
  Tensor<float> neg(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) neg[i] = 1.0f - a[i];
  EXPECT_LT(ssim(a, neg), 0.0);
}

TEST(Ssim, Symmetric) {
  Rng rng(4);
  const auto a = rng.uniform_tensor<float>(Shape{3, 16, 16}, 0.0, 1.0), b = rng.uniform_tensor<float>(Shape{3, 16, 16}, 0.0, 1.0);
  EXPECT_EQ(ssim(a, b), ssim(b, a));
}

TEST(Ssim, RejectsImageSmallerThanWindow) { EXPECT_THROW(ssim(Tensor<float>(Shape{10, 30}), Tensor<float>(Shape{10, 30})), ShapeError); }

TEST(MaskCentroid, SinglePixel) {
  const auto c = mask_centroid(mask(10, 10, {{3, 7}}));
  ASSERT_TRUE(c);
  EXPECT_EQ((*c)[0], 3.0);
  EXPECT_EQ((*c)[1], 7.0);
}

TEST(MaskCentroid, BlockAtOrigin) {
  const auto c = mask_centroid(rect(6, 6, 0, 0, 2, 2));
  ASSERT_TRUE(c);
  EXPECT_EQ((*c)[0], 0.5);
  EXPECT_EQ((*c)[1], 0.5);
}

TEST(MaskCentroid, EmptyIsFlagged) { EXPECT_FALSE(mask_centroid(Tensor<float>(Shape{4, 4}))); }

TEST(MaskFrame, RejectsNonBinaryValues) {
  Tensor<float> m(Shape{3, 3});
  m[0] = 0.5f;
  EXPECT_THROW(MaskFrame{m}, DataError);
}

TEST(Ope, IdenticalIsZero) {
  const auto m = disk(20, 20, 8, 9, 4);
  EXPECT_EQ(ope(m, m), 0.0);
}

TEST(Ope, PenaltyCases) {
  const Tensor<float> empty(Shape{16, 16});
  EXPECT_EQ(ope(empty, rect(16, 16, 2, 2, 3, 3)), 1.0);
  EXPECT_EQ(ope(rect(16, 16, 2, 2, 3, 3), empty), 1.0);
  EXPECT_EQ(ope(empty, empty), 0.0);
}

TEST(Ope, DiagonalNormalization) {
  // 64 wide, 48 tall: diagonal 80.
  EXPECT_NEAR(ope(mask(48, 64, {{10, 10}}), mask(48, 64, {{13, 14}})), 0.0625, 1e-15);
}

TEST(Ope, SymmetricAndBounded) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto a = test_support::random_mask(rng, 20, 30), b = test_support::random_mask(rng, 20, 30);
    EXPECT_EQ(ope(a, b), ope(b, a));
    EXPECT_GE(ope(a, b), 0.0);
    EXPECT_LE(ope(a, b), 1.0);
  }
}

TEST(MaskOrientation, HorizontalBar) {
  const auto o = mask_orientation(rect(8, 30, 3, 4, 20, 1));
  EXPECT_EQ(o.theta, 0.0);
  EXPECT_TRUE(o.valid);
}

TEST(MaskOrientation, DiskIsInvalid) {
  const auto o = mask_orientation(disk(31, 31, 15, 15, 10));
  EXPECT_LT(o.alpha, 0.15);
  EXPECT_FALSE(o.valid);
}

TEST(MaskOrientation, NineteenPixelsIsInvalid) {
  const auto o = mask_orientation(rect(5, 30, 2, 2, 19, 1));
  EXPECT_EQ(o.area, 19);
  EXPECT_GT(o.alpha, 0.99);
  EXPECT_FALSE(o.valid);
}

TEST(MaskOrientation, InvariantToTranslationAndUpsampling) {
  Rng rng(6);
  int checked = 0;
  for (int i = 0; i < 40; ++i) {
    const auto m = test_support::random_mask(rng, 20, 24);
    const auto o = mask_orientation(m);
    if (!o.valid) continue;
    ++checked;
    Tensor<float> shifted(Shape{30, 34}), up(Shape{40, 48});
    for (int64_t y = 0; y < 20; ++y)
      for (int64_t x = 0; x < 24; ++x) {
        shifted[(y + 7) * 34 + x + 5] = m[y * 24 + x];
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) up[(2 * y + dy) * 48 + 2 * x + dx] = m[y * 24 + x];
      }
    EXPECT_LE(fold_axis_degrees(o.theta, mask_orientation(shifted).theta), 0.5);
    EXPECT_LE(fold_axis_degrees(o.theta, mask_orientation(up).theta), 0.5);
  }
  EXPECT_GT(checked, 10);
}

TEST(Ooe, Cases) {
  const auto h = rect(30, 30, 5, 10, 20, 2), v = rect(30, 30, 10, 5, 2, 20);
  EXPECT_EQ(*ooe(h, h), 0.0);
  EXPECT_NEAR(*ooe(h, v), 90.0, 1e-12);
  EXPECT_NEAR(fold_axis_degrees(170.0 * M_PI / 180.0, 10.0 * M_PI / 180.0), 20.0, 1e-9);
  EXPECT_FALSE(ooe(h, disk(30, 30, 15, 15, 8)));
}

TEST(Ooe, SymmetricAndBounded) {
  Rng rng(7);
  for (int i = 0; i < 60; ++i) {
    const auto a = test_support::random_mask(rng, 24, 24), b = test_support::random_mask(rng, 24, 24);
    const auto ab = ooe(a, b), ba = ooe(b, a);
    ASSERT_EQ(ab.has_value(), ba.has_value());
    if (!ab) continue;
    EXPECT_EQ(*ab, *ba);
    EXPECT_GE(*ab, 0.0);
    EXPECT_LE(*ab, 90.0);
  }
}

TEST(MaskOracles, RandomMasksAgreeWithPixelEnumeration) {
  const auto r = test_support::run_mask_oracles(2024, 100);
  EXPECT_EQ(r.gate_mismatches, 0);
  EXPECT_LE(r.max_error, 1e-9) << r.worst;
}

TEST(MissingRatio, Definition) {
  EXPECT_EQ(*missing_ratio({true, true, false}, {true, true, false}), 0.0);
  std::vector<bool> present(10, true), det(10, true);
  det[3] = det[7] = false;
  EXPECT_NEAR(*missing_ratio(present, det), 0.2, 1e-15);
  EXPECT_FALSE(missing_ratio({false, false}, {true, false}));
}

TEST(HandDetector, MatchesPixelCountOracle) {
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    auto frame = rng.uniform_tensor<float>(Shape{3, 16, 16}, 0.0, 1.0);
    const int64_t n = rng.uniform_int(0, 40);
    for (int64_t k = 0; k < n; ++k) {
      const int64_t p = rng.uniform_int(0, 255);
      frame[p] = 1.0f - float(rng.uniform(0, 0.2));
      frame[256 + p] = float(rng.uniform(0, 0.2));
      frame[512 + p] = 1.0f;
    }
    int64_t count = 0;
    for (int64_t p = 0; p < 256; ++p)
      count += frame[p] >= 0.75f && frame[256 + p] <= 0.25f && frame[512 + p] >= 0.75f;
    EXPECT_EQ(hand_detected(frame), count >= 20);
  }
}

TEST(SegRmse, Cases) {
  const auto a = rect(8, 8, 0, 0, 8, 4);
  Tensor<float> comp(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) comp[i] = 1.0f - a[i];
  EXPECT_EQ(seg_rmse({a, a}, {a, a}), 0.0);
  EXPECT_EQ(seg_rmse({a}, {comp}), 1.0);
  EXPECT_NEAR(seg_rmse({a, a}, {a, comp}), std::sqrt(0.5), 1e-15);
  EXPECT_THROW(seg_rmse({a}, {a, a}), DataError);
}

TEST(SegmentObject, RecoversRenderedMask) {
  const auto clip = world::generate_clip(3, 5, 32);
  const Palette p{clip.background, clip.table, clip.object_a, clip.object_b};
  for (int64_t f = 0; f < clip.length; ++f) {
    const auto m = segment_object(clip.frame(f), p);
    for (int64_t i = 0; i < m.size(); ++i) ASSERT_EQ(m[i], clip.object_masks[f * 1024 + i]);
  }
}

geometry::Trajectory wavy(int n) {
  geometry::Trajectory t;
  for (int i = 0; i < n; ++i)
    t.push_back({geometry::rotation_about(Vec3(0.2, 1, 0.3), 0.05 * i), Vec3(0.1 * i, 0.03 * i * i, std::sin(0.7 * i))});
  return t;
}

TEST(TrajectoryErrors, IdenticalIsZero) {
  const auto t = wavy(8);
  const auto e = trajectory_errors(t, t);
  EXPECT_NEAR(e.ate, 0, 1e-12);
  EXPECT_NEAR(e.rre, 0, 1e-6);
  EXPECT_NEAR(e.rpe, 0, 1e-12);
  EXPECT_FALSE(e.degenerate);
}

TEST(TrajectoryErrors, SimilarityCopyIsZero) {
  const auto gt = wavy(10);
  const Mat3 Q = geometry::rotation_about(Vec3(1, -2, 0.5), 0.9);
  const double s = 2.5;
  geometry::Trajectory est;
  for (const auto& p : gt) est.push_back({Q * p.R, s * (Q * p.t) + Vec3(1, 2, 3)});
  const auto e = trajectory_errors(est, gt);
  EXPECT_NEAR(e.ate, 0, 1e-9);
  EXPECT_NEAR(e.rre, 0, 1e-5);
  EXPECT_NEAR(e.rpe, 0, 1e-9);
}

TEST(TrajectoryErrors, RecoversPerStepRotation) {
  const Vec3 axis(0.3, 0.4, 1.0);
  geometry::Trajectory gt, est;
  for (int i = 0; i < 9; ++i) {
    const Vec3 t(0.05 * i, 0.02 * i * i, 0.01 * std::cos(i));
    gt.push_back({geometry::rotation_about(axis, 0.1 * i), t});
    est.push_back({geometry::rotation_about(axis, 0.1 * i + 2.0 * M_PI / 180.0 * i), t});
  }
  EXPECT_NEAR(trajectory_errors(est, gt).rre, 2.0, 1e-6);
}

TEST(TrajectoryErrors, LengthMismatchAndDegenerateAlignment) {
  EXPECT_THROW(trajectory_errors(wavy(3), wavy(4)), DataError);
  geometry::Trajectory line;
  for (int i = 0; i < 5; ++i) line.push_back({Mat3::Identity(), Vec3(i, 0, 0)});
  EXPECT_TRUE(trajectory_errors(line, line).degenerate);
}

struct PoseFixture {
  world::Clip clip = world::generate_clip(5, 5, 32);
  world::SceneSpec scene = world::generate_scene(5);
  RenderContext context(int64_t f) const {
    const auto& s = clip.states[static_cast<size_t>(f)];
    return {scene, s.object, s.hand, {}};
  }
};

TEST(PoseSearch, RecoversTruePoseWithinOneStep) {
  PoseFixture fx;
  const double rot = 1.0 / fx.clip.intrinsics.fx, trans = kTableDepth / fx.clip.intrinsics.fx;
  Rng rng(9);
  for (int64_t f = 0; f < fx.clip.length; ++f) {
    const auto i = static_cast<size_t>(rng.uniform_int(0, 2)), j = static_cast<size_t>(rng.uniform_int(3, 5));
    std::array<double, 6> offset{};
    offset[i] = static_cast<double>(rng.uniform_int(-3, 3)) * rot;
    offset[j] = static_cast<double>(rng.uniform_int(-3, 3)) * trans;
    const geometry::Pose truth = fx.clip.states[static_cast<size_t>(f)].camera;
    const auto est = estimate_pose_bruteforce(fx.clip.frame(f), fx.context(f), perturb(truth, offset));
    EXPECT_TRUE(est.reliable);
    EXPECT_LE((est.pose.t - truth.t).cwiseAbs().maxCoeff(), trans + 1e-12) << "frame " << f;
    EXPECT_LE(geometry::rotation_angle(truth.R.transpose() * est.pose.R), rot + 1e-9) << "frame " << f;
  }
}

TEST(PoseSearch, FlatGrayIsUnreliable) {
  PoseFixture fx;
  const auto est = estimate_pose_bruteforce(Tensor<float>(Shape{3, 32, 32}, 0.5f), fx.context(0), fx.clip.states[0].camera);
  EXPECT_FALSE(est.reliable);
}

TEST(PoseSearch, Deterministic) {
  PoseFixture fx;
  const geometry::Pose guess = perturb(fx.clip.states[1].camera, {0.01, 0, 0, 0, 0.005, 0});
  const auto a = estimate_pose_bruteforce(fx.clip.frame(1), fx.context(1), guess);
  const auto b = estimate_pose_bruteforce(fx.clip.frame(1), fx.context(1), guess);
  EXPECT_EQ(a.pose.matrix(), b.pose.matrix());
  EXPECT_EQ(a.mse, b.mse);
}

TEST(Contact, PearsonAndDisplacement) {
  EXPECT_NEAR(*pearson({1, 2, 3, 4}, {2, 4, 6, 8}), 1.0, 1e-15);
  EXPECT_FALSE(pearson({1, 1, 1}, {1, 2, 3}));
  std::vector<Tensor<float>> masks;
  std::vector<std::array<double, 2>> ee;
  for (int f = 0; f < 5; ++f) {
    masks.push_back(rect(32, 32, 3 + 2 * f, 10 + f, 4, 4));
    ee.push_back({1.0 + 2 * f, 5.0 + f});
  }
  EXPECT_NEAR(*contact_correlation(masks, ee, {false, true, true, true, true}), 1.0, 1e-12);
}

TEST(Contact, GroundTruthMasksTrackEndEffector) {
  const auto clip = world::generate_clip(0, 9, 32);
  std::vector<Tensor<float>> masks;
  for (int64_t f = 0; f < clip.length; ++f) {
    Tensor<float> m(Shape{1, 32, 32});
    std::copy_n(clip.object_masks.data() + f * 1024, 1024, m.data());
    masks.push_back(m);
  }
  const auto r = contact_correlation(masks, clip.ee_pixels, clip.attached);
  ASSERT_TRUE(r);
  EXPECT_GT(*r, 0.7);
}

TEST(Report, GroundTruthAgainstItselfIsIdentity) {
  const auto clip = world::generate_clip(1, 5, 32);
  const auto m = evaluate_clip(clip, clip.rgb, "c0");
  EXPECT_EQ(*m.psnr, 99.0);
  EXPECT_NEAR(*m.ssim, 1.0, 1e-12);
  EXPECT_EQ(*m.ope, 0.0);
  EXPECT_EQ(*m.seg_rmse, 0.0);
  EXPECT_NEAR(*m.ate, 0.0, 1e-12);
  EXPECT_NEAR(*m.rpe, 0.0, 1e-12);
  EXPECT_NEAR(*m.rre, 0.0, 1e-6);
  EXPECT_EQ(*m.pose_reliable_ratio, 1.0);
  if (m.ooe) EXPECT_EQ(*m.ooe, 0.0);
  if (m.mr) EXPECT_EQ(*m.mr, 0.0);
}

TEST(Report, MacroRowIsMeanOfClipRows) {
  std::vector<ClipMetrics> rows(3);
  for (int i = 0; i < 3; ++i) {
    rows[static_cast<size_t>(i)].clip = "c" + std::to_string(i);
    rows[static_cast<size_t>(i)].psnr = 20.0 + i;
    rows[static_cast<size_t>(i)].ooe = i == 1 ? Metric{} : Metric{10.0 * i};
  }
  const auto macro = macro_average(rows);
  EXPECT_EQ(*macro.psnr, 21.0);
  EXPECT_EQ(*macro.ooe, 10.0);
  EXPECT_FALSE(macro.ate);

  std::ostringstream os;
  write_report_csv(os, rows);
  std::istringstream is(os.str());
  std::string header, line;
  std::getline(is, header);
  EXPECT_EQ(header, "clip,psnr,ssim,ope,ooe,ooe_valid_ratio,mr,seg_rmse,ate,rre,rpe,pose_reliable_ratio,lpips,object_clip,vbench");
  int n = 0;
  while (std::getline(is, line)) ++n;
  EXPECT_EQ(n, 4);
  EXPECT_NE(os.str().find("macro,21,na,na,10,"), std::string::npos);
}

}  // namespace
