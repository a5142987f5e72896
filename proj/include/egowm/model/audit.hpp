#pragma once

#include <string>
#include <vector>

#include "egowm/model/codec.hpp"
#include "egowm/model/embeddings.hpp"

namespace egowm::model {

struct AuditEntry {
  std::string name;
  Shape shape;
};

/// Analytic shapes of every stream, from layer-chain dry runs only (no weights are allocated).
inline std::vector<AuditEntry> shape_audit(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t L = cfg.frames, S = cfg.size;
  std::vector<AuditEntry> out;
  const Shape video_latent = infer_chain(LatentCodec<float>::encoder_chain(cfg), {3, L, S, S});
  out.push_back({"codec.latent", video_latent});

  const Shape hke = infer_chain(hke_chain(cfg), {3, L, S, S});
  out.push_back({"hke.feature", hke});
  out.push_back({"hke.tokens", {hke[1] * hke[2] * hke[3], hke[0]}});

  const Shape ref = infer_chain(reference_chain(cfg), {3, S, S});
  out.push_back({"reference.feature_hwc", {ref[1], ref[2], ref[0]}});

  const Shape down = infer_chain(eme_downsampler_chain(cfg), {6, L, S, S});
  out.push_back({"eme.downsampler", down});
  const Shape eme = infer_chain(eme_chain(cfg), {6, L, S, S});
  out.push_back({"eme.feature", eme});
  out.push_back({"eme.tokens", {eme[1] * eme[2] * eme[3], eme[0]}});

  const Shape frame_latent = infer_chain(LatentCodec<float>::encoder_chain(cfg), {3, 1, S, S});
  const Shape oee_latent{frame_latent[0], video_latent[1], frame_latent[2], frame_latent[3]};
  out.push_back({"oee.latent", oee_latent});
  const Shape oee = infer_shape(LayerSpec::patchify3d(cfg.latent_channels, cfg.width), oee_latent);
  out.push_back({"oee.tokens", {oee[1] * oee[2] * oee[3], oee[0]}});

  out.push_back({"anchor", {cfg.latent_channels + cfg.mask_channels, video_latent[1], video_latent[2], video_latent[3]}});
  const Shape main = infer_shape(LayerSpec::patchify3d(cfg.latent_channels + cfg.ref_channels, cfg.width),
                                 {cfg.latent_channels + cfg.ref_channels, video_latent[1], video_latent[2], video_latent[3]});
  out.push_back({"main.tokens", {main[1] * main[2] * main[3], main[0]}});
  return out;
}

/// Published shapes the paper-scale configuration must reproduce exactly.
inline std::vector<AuditEntry> published_shapes() {
  return {{"hke.feature", {5120, 21, 30, 30}},       {"reference.feature_hwc", {60, 60, 20}},
          {"eme.downsampler", {64, 21, 60, 60}},     {"eme.feature", {5120, 21, 30, 30}},
          {"eme.tokens", {18900, 5120}},             {"oee.latent", {16, 21, 60, 60}},
          {"oee.tokens", {18900, 5120}},             {"codec.latent", {16, 21, 60, 60}}};
}

inline const Shape* find_entry(const std::vector<AuditEntry>& entries, const std::string& name) {
  for (const auto& e : entries)
    if (e.name == name) return &e.shape;
  return nullptr;
}

}  // namespace egowm::model
