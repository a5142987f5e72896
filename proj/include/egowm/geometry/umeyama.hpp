#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "egowm/geometry/camera.hpp"

namespace egowm::geometry {

/// x -> scale * R * x + t
struct Similarity {
  double scale = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  bool degenerate = false;

  Vec3 apply(const Vec3& x) const { return scale * (R * x) + t; }
};

/// Closed-form least-squares similarity taking `est` onto `ref`
/// (minimizes sum ||s R est_i + t - ref_i||^2). Collinear, coincident, or fewer than
/// three points are flagged and yield the identity.
inline Similarity umeyama_align(std::span<const Vec3> est, std::span<const Vec3> ref) {
  if (est.size() != ref.size()) throw DataError("umeyama_align: point counts differ");
  Similarity out;
  const auto n = static_cast<double>(est.size());
  if (est.size() < 3) {
    out.degenerate = true;
    return out;
  }
  Vec3 mu_x = Vec3::Zero(), mu_y = Vec3::Zero();
  for (size_t i = 0; i < est.size(); ++i) {
    mu_x += est[i];
    mu_y += ref[i];
  }
  mu_x /= n;
  mu_y /= n;
  Mat3 cov = Mat3::Zero(), cov_x = Mat3::Zero();
  double var_x = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    const Vec3 dx = est[i] - mu_x, dy = ref[i] - mu_y;
    cov += dy * dx.transpose();
    cov_x += dx * dx.transpose();
    var_x += dx.squaredNorm();
  }
  cov /= n;
  cov_x /= n;
  var_x /= n;

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov_x);
  const auto ev = eig.eigenvalues();  // ascending
  if (var_x < 1e-18 || ev(1) <= 1e-10 * ev(2)) {
    out.degenerate = true;
    return out;
  }

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2, 2) = -1;
  out.R = svd.matrixU() * S * svd.matrixV().transpose();
  out.scale = (svd.singularValues().asDiagonal() * S).trace() / var_x;
  out.t = mu_y - out.scale * out.R * mu_x;
  return out;
}

inline std::vector<Vec3> positions(const Trajectory& traj) {
  std::vector<Vec3> out;
  out.reserve(traj.size());
  for (const auto& p : traj) out.push_back(p.t);
  return out;
}

inline Similarity umeyama_align(const Trajectory& est, const Trajectory& ref) {
  const auto a = positions(est), b = positions(ref);
  return umeyama_align(std::span<const Vec3>(a), std::span<const Vec3>(b));
}

/// Sum of squared residuals of a similarity over paired points.
inline double alignment_residual(const Similarity& s, std::span<const Vec3> est, std::span<const Vec3> ref) {
  double r = 0;
  for (size_t i = 0; i < est.size(); ++i) r += (s.apply(est[i]) - ref[i]).squaredNorm();
  return r;
}

}  // namespace egowm::geometry
