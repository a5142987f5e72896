#pragma once

#include <cmath>

#include "egowm/geometry/umeyama.hpp"

namespace egowm::eval {

struct TrajectoryErrors {
  double ate = 0;  // RMSE of aligned positions
  double rre = 0;  // mean per-step relative rotation error, degrees
  double rpe = 0;  // mean per-step relative translation error
  bool degenerate = false;  // alignment undefined; errors computed without it
};

/// Similarity-aligned ATE plus per-step (delta 1) relative pose errors, averaged.
inline TrajectoryErrors trajectory_errors(const geometry::Trajectory& est, const geometry::Trajectory& gt) {
  if (est.size() != gt.size()) throw DataError("trajectory_errors: lengths differ");
  if (est.empty()) throw DataError("trajectory_errors: empty trajectory");
  TrajectoryErrors out;
  const geometry::Similarity sim = geometry::umeyama_align(est, gt);
  out.degenerate = sim.degenerate;

  geometry::Trajectory aligned;
  aligned.reserve(est.size());
  for (const auto& p : est) aligned.push_back({sim.R * p.R, sim.apply(p.t)});

  double se = 0;
  for (size_t i = 0; i < gt.size(); ++i) se += (aligned[i].t - gt[i].t).squaredNorm();
  out.ate = std::sqrt(se / static_cast<double>(gt.size()));

  if (gt.size() < 2) return out;
  for (size_t i = 0; i + 1 < gt.size(); ++i) {
    const geometry::Pose dg = gt[i].inverse() * gt[i + 1];
    const geometry::Pose de = aligned[i].inverse() * aligned[i + 1];
    const geometry::Pose e = dg.inverse() * de;
    out.rpe += e.t.norm();
    out.rre += geometry::rotation_angle(e.R) * 180.0 / M_PI;
  }
  const auto steps = static_cast<double>(gt.size() - 1);
  out.rpe /= steps;
  out.rre /= steps;
  return out;
}

}  // namespace egowm::eval
