#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "egowm/core/error.hpp"
#include "egowm/core/tensor.hpp"

namespace egowm::cli {

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xff));
}

inline void put_chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32(out, static_cast<uint32_t>(crc32(0, out.data() + start, static_cast<uInt>(out.size() - start))));
}

}  // namespace detail

/// 8-bit RGB PNG of a [3,H,W] frame with values in [0,1].
inline void write_png(const std::filesystem::path& path, const Tensor<float>& frame) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("write_png: expected [3,H,W], got " + egowm::to_string(frame.shape()));
  const int64_t H = frame.dim(1), W = frame.dim(2), plane = H * W;
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<size_t>(H * (3 * W + 1)));
  for (int64_t y = 0; y < H; ++y) {
    raw.push_back(0);
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c)
        raw.push_back(static_cast<unsigned char>(std::lround(std::clamp(frame[c * plane + y * W + x], 0.0f, 1.0f) * 255.0f)));
  }
  uLongf zsize = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(zsize);
  if (compress2(z.data(), &zsize, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) throw DataError("write_png: compression failed");
  z.resize(zsize);

  std::vector<unsigned char> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  detail::put_u32(ihdr, static_cast<uint32_t>(W));
  detail::put_u32(ihdr, static_cast<uint32_t>(H));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  detail::put_chunk(out, "IHDR", ihdr);
  detail::put_chunk(out, "IDAT", z);
  detail::put_chunk(out, "IEND", {});
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("cannot write " + path.string());
}

}  // namespace egowm::cli
