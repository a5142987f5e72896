#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "egowm/eval/contact.hpp"
#include "egowm/eval/image_metrics.hpp"
#include "egowm/eval/masks.hpp"
#include "egowm/eval/pose_search.hpp"
#include "egowm/eval/trajectory_metrics.hpp"
#include "egowm/world/clip.hpp"

namespace egowm::eval {

using Metric = std::optional<double>;

/// One report row. Missing values are either not applicable (na) or never computed here (nc).
struct ClipMetrics {
  std::string clip;
  Metric psnr, ssim, ope, ooe, ooe_valid_ratio, mr, seg_rmse, ate, rre, rpe;
  Metric pose_reliable_ratio;
};

/// Column order of the CSV; the last three need pretrained networks and are always "nc".
inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"clip", "psnr", "ssim", "ope", "ooe", "ooe_valid_ratio", "mr", "seg_rmse", "ate", "rre",
                                             "rpe", "pose_reliable_ratio", "lpips", "object_clip", "vbench"};
  return cols;
}

inline std::vector<Metric ClipMetrics::*> metric_fields() {
  return {&ClipMetrics::psnr, &ClipMetrics::ssim, &ClipMetrics::ope, &ClipMetrics::ooe, &ClipMetrics::ooe_valid_ratio,
          &ClipMetrics::mr,   &ClipMetrics::seg_rmse, &ClipMetrics::ate, &ClipMetrics::rre, &ClipMetrics::rpe,
          &ClipMetrics::pose_reliable_ratio};
}

struct EvalOptions {
  PoseSearchOptions pose;
  bool trajectory = true;
};

/// Metrics of a predicted video [L,3,S,S] against a ground-truth clip. Trajectory metrics need
/// the clip's simulator states (camera poses are searched around the true ones); without them
/// they are not applicable.
inline ClipMetrics evaluate_clip(const world::Clip& gt, const Tensor<float>& pred, const std::string& name, const EvalOptions& o = {}) {
  if (pred.shape() != gt.rgb.shape()) throw DataError("evaluate_clip: prediction " + egowm::to_string(pred.shape()) + " vs " + egowm::to_string(gt.rgb.shape()));
  ClipMetrics m;
  m.clip = name;
  const int64_t L = gt.length, S = gt.size, n3 = 3 * S * S, n1 = S * S;
  const Palette palette{gt.background, gt.table, gt.object_a, gt.object_b};

  m.psnr = video_psnr(gt.rgb, pred);
  m.ssim = video_ssim(gt.rgb, pred);

  double ope_sum = 0, ooe_sum = 0;
  int64_t ooe_valid = 0;
  std::vector<bool> present, detected;
  std::vector<Tensor<float>> hand_gt, hand_gen;
  std::vector<Tensor<float>> frames;
  for (int64_t f = 0; f < L; ++f) {
    Tensor<float> frame(Shape{3, S, S}), gt_mask(Shape{1, S, S}), gt_hand(Shape{1, S, S});
    std::copy_n(pred.data() + f * n3, n3, frame.data());
    std::copy_n(gt.object_masks.data() + f * n1, n1, gt_mask.data());
    std::copy_n(gt.hand_maps.data() + f * n1, n1, gt_hand.data());
    const Tensor<float> gen_mask = segment_object(frame, palette);
    ope_sum += ope(gt_mask, gen_mask);
    if (const auto e = ooe(gt_mask, gen_mask)) {
      ooe_sum += *e;
      ++ooe_valid;
    }
    Tensor<float> gen_hand = hand_pixels(frame);
    present.push_back(MaskFrame(gt_hand).area() >= kHandMinPixels);
    detected.push_back(MaskFrame(gen_hand).area() >= kHandMinPixels);
    hand_gt.push_back(std::move(gt_hand));
    hand_gen.push_back(std::move(gen_hand));
    frames.push_back(std::move(frame));
  }
  m.ope = ope_sum / static_cast<double>(L);
  m.ooe_valid_ratio = static_cast<double>(ooe_valid) / static_cast<double>(L);
  if (ooe_valid > 0) m.ooe = ooe_sum / static_cast<double>(ooe_valid);
  m.mr = missing_ratio(present, detected);
  m.seg_rmse = seg_rmse(hand_gt, hand_gen);

  if (o.trajectory && static_cast<int64_t>(gt.states.size()) == L) {
    const world::SceneSpec scene = world::generate_scene(gt.seed);
    geometry::Trajectory est_world, gt_world;
    int64_t reliable = 0;
    for (int64_t f = 0; f < L; ++f) {
      const auto& st = gt.states[static_cast<size_t>(f)];
      const PoseEstimate pe = estimate_pose_bruteforce(frames[static_cast<size_t>(f)], RenderContext{scene, st.object, st.hand, {}}, st.camera, o.pose);
      reliable += pe.reliable;
      est_world.push_back(pe.pose);
      gt_world.push_back(st.camera);
    }
    const TrajectoryErrors te = trajectory_errors(geometry::relative_trajectory(est_world), geometry::relative_trajectory(gt_world));
    m.ate = te.ate;
    m.rre = te.rre;
    m.rpe = te.rpe;
    m.pose_reliable_ratio = static_cast<double>(reliable) / static_cast<double>(L);
  }
  return m;
}

/// Mean of each metric over the clips where it is defined.
inline ClipMetrics macro_average(const std::vector<ClipMetrics>& rows) {
  ClipMetrics out;
  out.clip = "macro";
  for (auto field : metric_fields()) {
    double s = 0;
    int64_t n = 0;
    for (const auto& r : rows)
      if (r.*field) {
        s += *(r.*field);
        ++n;
      }
    if (n > 0) out.*field = s / static_cast<double>(n);
  }
  return out;
}

inline std::string format_metric(const Metric& v) {
  if (!v) return "na";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

/// CSV with one row per clip followed by the macro row.
inline void write_report_csv(std::ostream& os, const std::vector<ClipMetrics>& rows) {
  const auto& cols = report_columns();
  for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  auto all = rows;
  all.push_back(macro_average(rows));
  for (const auto& r : all) {
    os << r.clip;
    for (auto field : metric_fields()) os << "," << format_metric(r.*field);
    os << ",nc,nc,nc\n";
  }
}

/// key=value lines for the macro row.
inline void write_report_summary(std::ostream& os, const std::vector<ClipMetrics>& rows) {
  const ClipMetrics macro = macro_average(rows);
  const auto& cols = report_columns();
  const auto fields = metric_fields();
  os << "clips=" << rows.size() << "\n";
  for (size_t i = 0; i < fields.size(); ++i) os << cols[i + 1] << "=" << format_metric(macro.*fields[i]) << "\n";
  os << "rpe_rre_convention=delta1_mean\n";
}

}  // namespace egowm::eval
