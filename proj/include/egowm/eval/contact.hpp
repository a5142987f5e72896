#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "egowm/eval/masks.hpp"

namespace egowm::eval {

/// Sample Pearson correlation; nullopt when either side has no variance or fewer than 3 samples.
inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DataError("pearson: sample counts differ");
  if (a.size() < 3) return std::nullopt;
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0 || sbb <= 0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

/// Correlation between object-mask centroid displacement and end-effector displacement over the
/// attached frames, both measured from the first attached frame; u and v components are pooled.
/// Frames whose mask is empty are skipped.
inline std::optional<double> contact_correlation(const std::vector<Tensor<float>>& masks, const std::vector<std::array<double, 2>>& ee_pixels,
                                                 const std::vector<bool>& attached) {
  if (masks.size() != ee_pixels.size() || masks.size() != attached.size()) throw DataError("contact_correlation: sequence lengths differ");
  std::optional<std::array<double, 2>> c0;
  std::array<double, 2> e0{};
  std::vector<double> obj, ee;
  for (size_t f = 0; f < masks.size(); ++f) {
    if (!attached[f]) continue;
    const auto c = mask_centroid(MaskFrame(masks[f]));
    if (!c) continue;
    if (!c0) {
      c0 = c;
      e0 = ee_pixels[f];
    }
    for (size_t k = 0; k < 2; ++k) {
      obj.push_back((*c)[k] - (*c0)[k]);
      ee.push_back(ee_pixels[f][k] - e0[k]);
    }
  }
  return pearson(obj, ee);
}

}  // namespace egowm::eval
