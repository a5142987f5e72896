#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "egowm/world/render.hpp"

namespace egowm::eval {

using geometry::Mat3;
using geometry::Vec3;

/// Everything except the camera needed to re-render a frame.
struct RenderContext {
  world::SceneSpec scene;
  world::ObjectPose object;
  world::HandState hand;
  world::ArmSpec arm;
};

/// Typical camera-to-table distance, used to turn a pixel into a translation step.
inline constexpr double kTableDepth = 0.4;

struct PoseSearchOptions {
  double translation_step = 0;  // meters; 0 = shift of about one pixel at the table
  double rotation_step = 0;     // radians; 0 = one pixel at the principal point
  int radius = 3;                   // grid steps per side
  double refine_factor = 0.25;      // step scale of the second pass
  int max_sweeps = 8;
  double blur_sigma = 1.0;  // pixels, first pass
  double max_mse = 0.01;
};

struct PoseEstimate {
  geometry::Pose pose;
  double mse = 0;
  bool reliable = true;
};

/// Camera pose offset by a rotation vector (applied in the camera frame) and a world translation.
inline geometry::Pose perturb(const geometry::Pose& p, const std::array<double, 6>& x) {
  const Vec3 r(x[0], x[1], x[2]);
  const double a = r.norm();
  const Mat3 dR = a > 0 ? geometry::rotation_about(r / a, a) : Mat3::Identity();
  return {p.R * dR, p.t + Vec3(x[3], x[4], x[5])};
}

/// Separable Gaussian blur of each channel of [C,S,S] with edge clamping; sigma 0 copies.
inline std::vector<double> blur(const Tensor<float>& img, double sigma) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  std::vector<double> out(static_cast<size_t>(img.size()));
  for (int64_t i = 0; i < img.size(); ++i) out[static_cast<size_t>(i)] = img[i];
  if (sigma <= 0) return out;
  const auto r = static_cast<int64_t>(std::ceil(3 * sigma));
  std::vector<double> w(static_cast<size_t>(2 * r + 1));
  double sw = 0;
  for (int64_t k = -r; k <= r; ++k) sw += w[static_cast<size_t>(k + r)] = std::exp(-0.5 * double(k * k) / (sigma * sigma));
  for (auto& v : w) v /= sw;
  std::vector<double> tmp(out.size());
  const auto clampi = [](int64_t v, int64_t n) { return std::min(std::max(v, int64_t{0}), n - 1); };
  for (int64_t c = 0; c < C; ++c) {
    double* p = out.data() + c * H * W;
    double* t = tmp.data() + c * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double s = 0;
        for (int64_t k = -r; k <= r; ++k) s += w[static_cast<size_t>(k + r)] * p[y * W + clampi(x + k, W)];
        t[y * W + x] = s;
      }
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double s = 0;
        for (int64_t k = -r; k <= r; ++k) s += w[static_cast<size_t>(k + r)] * t[clampi(y + k, H) * W + x];
        p[y * W + x] = s;
      }
  }
  return out;
}

inline Tensor<float> render_view(const RenderContext& ctx, const geometry::Pose& cam, int64_t size) {
  return world::render_frame(ctx.scene, ctx.object, cam, ctx.hand, ctx.arm, size);
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double se = 0;
  for (size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  return se / static_cast<double>(a.size());
}

/// Pixel MSE between `frame` and the scene re-rendered from `cam`.
inline double render_mse(const Tensor<float>& frame, const RenderContext& ctx, const geometry::Pose& cam) {
  return mse(blur(frame, 0), blur(render_view(ctx, cam, frame.dim(-1)), 0));
}

/// Local grid search for the camera pose that best explains `frame` [3,S,S]. Each sweep scans every
/// pair of degrees of freedom exhaustively over +-radius steps around the current point and moves
/// to the best candidate overall, repeating until nothing improves; the second pass does the same
/// with steps scaled by refine_factor. Both images are blurred while searching so the objective
/// varies below one pixel; reliability is judged on the unblurred MSE.
inline PoseEstimate estimate_pose_bruteforce(const Tensor<float>& frame, const RenderContext& ctx, const geometry::Pose& initial_guess,
                                             const PoseSearchOptions& o = {}) {
  if (frame.rank() != 3 || frame.dim(0) != 3 || frame.dim(1) != frame.dim(2)) {
    throw ShapeError("estimate_pose_bruteforce: expected [3,S,S], got " + egowm::to_string(frame.shape()));
  }
  const int64_t S = frame.dim(-1);
  const double focal = ctx.scene.intrinsics(S).fx;
  const double rot_step = o.rotation_step > 0 ? o.rotation_step : 1.0 / focal;
  const double trans_step = o.translation_step > 0 ? o.translation_step : kTableDepth / focal;
  std::array<double, 6> x{};
  for (int pass = 0; pass < 2; ++pass) {
    const double scale = pass == 0 ? 1.0 : o.refine_factor;
    const double sigma = o.blur_sigma * scale;
    const auto target = blur(frame, sigma);
    const auto cost = [&](const std::array<double, 6>& y) { return mse(target, blur(render_view(ctx, perturb(initial_guess, y), S), sigma)); };
    const auto step = [&](size_t dof) { return (dof < 3 ? rot_step : trans_step) * scale; };
    double best = cost(x);
    for (int sweep = 0; sweep < o.max_sweeps && best > 0; ++sweep) {
      const auto center = x;
      for (size_t i = 0; i < 6; ++i)
        for (size_t j = i + 1; j < 6; ++j)
          for (int a = -o.radius; a <= o.radius; ++a)
            for (int b = -o.radius; b <= o.radius; ++b) {
              if (a == 0 && b == 0) continue;
              auto y = center;
              y[i] += a * step(i);
              y[j] += b * step(j);
              const double e = cost(y);
              if (e < best) {
                best = e;
                x = y;
              }
            }
      if (x == center) break;
    }
  }
  const geometry::Pose pose = perturb(initial_guess, x);
  const double err = render_mse(frame, ctx, pose);
  return {pose, err, err <= o.max_mse};
}

}  // namespace egowm::eval
