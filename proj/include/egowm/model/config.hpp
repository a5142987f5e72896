#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "egowm/core/attention.hpp"
#include "egowm/core/error.hpp"

namespace egowm::model {

/// (t, h, w) extents of a token or latent grid.
struct Grid {
  int64_t t = 1, h = 1, w = 1;
  int64_t count() const { return t * h * w; }
  bool operator==(const Grid&) const = default;
};

/// Every extent of the world model. `desk()` is the laptop-scale default, `paper()` the published scale.
struct ModelConfig {
  int64_t frames = 9;  // L
  int64_t size = 32;   // S
  int64_t temporal_stride = 4;
  int64_t spatial_stride = 8;
  int64_t latent_channels = 16;  // c_lat
  int64_t mask_channels = 4;
  int64_t ref_channels = 20;  // C_ref
  int64_t width = 64;         // d
  int64_t blocks = 4;
  int64_t heads = 2;
  int64_t adapter_depth = 2;  // D
  int64_t mlp_ratio = 4;
  double gamma_init = 0.0;
  double guidance = 1.0;

  int64_t hke_hidden = 8;
  int64_t ref_hidden = 8;
  std::array<int64_t, 3> eme_down{8, 16, 16};
  std::array<int64_t, 3> eme_stages{16, 32, 32};
  std::array<bool, 3> eme_stage_downsample{false, false, false};
  int64_t eme_attention_heads = 1;

  int64_t codec_hidden = 64;
  int64_t codec_decoder_hidden = 256;

  std::array<int64_t, 3> context_channels{16, 32, 32};
  int64_t context_tokens = 4;

  int64_t diffusion_steps = 1000;  // T
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  static ModelConfig desk() { return {}; }

  static ModelConfig paper() {
    ModelConfig c;
    c.frames = 81;
    c.size = 480;
    c.width = 5120;
    c.blocks = 40;
    c.heads = 40;
    c.adapter_depth = 20;
    c.hke_hidden = 16;
    c.ref_hidden = 16;
    c.eme_down = {16, 32, 64};
    c.eme_stages = {64, 128, 256};
    c.codec_hidden = 384;
    c.codec_decoder_hidden = 1024;
    c.context_channels = {32, 64, 128};
    c.context_tokens = 16;
    return c;
  }

  Grid latent_grid() const {
    return {(frames - 1) / temporal_stride + 1, size / spatial_stride, size / spatial_stride};
  }
  /// Main token grid after the (1,2,2) patchifier.
  Grid token_grid() const {
    const Grid g = latent_grid();
    return {g.t, g.h / 2, g.w / 2};
  }
  int64_t head_dim() const { return width / heads; }
  /// Rotary offset for object tokens: placed just past the main grid in h and w.
  GridPos oee_shift() const {
    const Grid g = token_grid();
    return {0, g.h, g.w};
  }

  /// Canonical key=value listing of every field, in a fixed order (hashed into checkpoints).
  std::vector<std::pair<std::string, std::string>> entries() const {
    const auto num = [](double v) {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    };
    const auto arr = [](const auto& a) {
      std::string s;
      for (size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + std::to_string(static_cast<int64_t>(a[i]));
      return s;
    };
    return {{"L", std::to_string(frames)},
            {"S", std::to_string(size)},
            {"temporal_stride", std::to_string(temporal_stride)},
            {"spatial_stride", std::to_string(spatial_stride)},
            {"latent_channels", std::to_string(latent_channels)},
            {"mask_channels", std::to_string(mask_channels)},
            {"ref_channels", std::to_string(ref_channels)},
            {"d", std::to_string(width)},
            {"blocks", std::to_string(blocks)},
            {"heads", std::to_string(heads)},
            {"D", std::to_string(adapter_depth)},
            {"mlp_ratio", std::to_string(mlp_ratio)},
            {"gamma_init", num(gamma_init)},
            {"guidance", num(guidance)},
            {"hke_hidden", std::to_string(hke_hidden)},
            {"ref_hidden", std::to_string(ref_hidden)},
            {"eme_down", arr(eme_down)},
            {"eme_stages", arr(eme_stages)},
            {"eme_stage_downsample", arr(eme_stage_downsample)},
            {"eme_attention_heads", std::to_string(eme_attention_heads)},
            {"codec_hidden", std::to_string(codec_hidden)},
            {"codec_decoder_hidden", std::to_string(codec_decoder_hidden)},
            {"context_channels", arr(context_channels)},
            {"context_tokens", std::to_string(context_tokens)},
            {"diffusion_steps", std::to_string(diffusion_steps)},
            {"beta_start", num(beta_start)},
            {"beta_end", num(beta_end)}};
  }

  /// FNV-1a over the canonical listing.
  uint64_t hash() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : entries())
      for (char ch : k + "=" + v + "\n") {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
      }
    return h;
  }

  void validate() const {
    const auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    if (frames < 1 || (frames - 1) % temporal_stride != 0) fail("frames - 1 must be a multiple of the temporal stride");
    if (size < 1 || size % (2 * spatial_stride) != 0) fail("size must be a multiple of twice the spatial stride");
    if (latent_channels + mask_channels != ref_channels) fail("latent + mask channels must equal reference channels");
    if (width < 1 || heads < 1 || width % heads != 0) fail("width must be divisible by heads");
    if (head_dim() % 2 != 0) fail("head width must be even for rotary embedding");
    if (blocks < 1 || adapter_depth < 1 || adapter_depth > blocks) fail("adapter depth must lie in [1, blocks]");
    if (eme_attention_heads < 1 || eme_stages[2] % eme_attention_heads != 0) fail("EME attention heads must divide stage width");
    if (context_tokens < 1) fail("context tokens must be positive");
    if (guidance != 1.0) fail("only guidance 1.0 is supported");
    if (diffusion_steps < 1) fail("diffusion steps must be positive");
    if (!(beta_start > 0 && beta_start <= beta_end && beta_end < 1)) fail("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
};

}  // namespace egowm::model
