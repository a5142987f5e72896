#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "egowm/core/tensor.hpp"

namespace egowm {

/// ".tns" container: "TNSR", version byte 1, u32 rank, rank x u32 extents, dtype byte
/// (1 = float32, 2 = float64), then the row-major payload. All integers and floats little-endian.
namespace tns {

inline constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};
inline constexpr uint8_t kVersion = 1;
inline constexpr uint8_t kFloat32 = 1;
inline constexpr uint8_t kFloat64 = 2;

namespace detail {
template <typename U>
void put_le(std::vector<char>& buf, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  buf.insert(buf.end(), bytes, bytes + sizeof(U));
}

template <typename U>
U get_le(const char*& p, const char* end, const std::string& what) {
  if (end - p < static_cast<std::ptrdiff_t>(sizeof(U))) throw DataError(what + ": truncated tensor file");
  char bytes[sizeof(U)];
  std::memcpy(bytes, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  p += sizeof(U);
  U v;
  std::memcpy(&v, bytes, sizeof(U));
  return v;
}
}  // namespace detail

template <typename T>
std::vector<char> encode(const Tensor<T>& t, uint8_t dtype = kFloat32) {
  if (dtype != kFloat32 && dtype != kFloat64) throw DataError("tns: unsupported dtype code " + std::to_string(dtype));
  std::vector<char> buf(kMagic, kMagic + 4);
  buf.push_back(static_cast<char>(kVersion));
  detail::put_le<uint32_t>(buf, static_cast<uint32_t>(t.rank()));
  for (auto e : t.shape()) detail::put_le<uint32_t>(buf, static_cast<uint32_t>(e));
  buf.push_back(static_cast<char>(dtype));
  for (auto v : t.span()) {
    if (dtype == kFloat32)
      detail::put_le<float>(buf, static_cast<float>(v));
    else
      detail::put_le<double>(buf, static_cast<double>(v));
  }
  return buf;
}

template <typename T = float>
Tensor<T> decode(const std::vector<char>& buf, const std::string& what = "tensor") {
  const char* p = buf.data();
  const char* end = p + buf.size();
  if (buf.size() < 5 || std::memcmp(p, kMagic, 4) != 0) throw DataError(what + ": missing TNSR magic");
  p += 4;
  const auto version = static_cast<uint8_t>(*p++);
  if (version != kVersion) throw DataError(what + ": unsupported version " + std::to_string(version));
  const auto rank = detail::get_le<uint32_t>(p, end, what);
  if (rank == 0 || rank > 16) throw DataError(what + ": implausible rank " + std::to_string(rank));
  Shape shape;
  for (uint32_t i = 0; i < rank; ++i) shape.push_back(detail::get_le<uint32_t>(p, end, what));
  if (p >= end) throw DataError(what + ": truncated header");
  const auto dtype = static_cast<uint8_t>(*p++);
  if (dtype != kFloat32 && dtype != kFloat64) throw DataError(what + ": unsupported dtype code " + std::to_string(dtype));
  for (auto e : shape)
    if (e < 1) throw DataError(what + ": zero extent in shape " + to_string(shape));
  const size_t elem = dtype == kFloat32 ? 4 : 8;
  const auto n = static_cast<size_t>(numel(shape));
  if (static_cast<size_t>(end - p) != n * elem) throw DataError(what + ": payload size does not match shape " + to_string(shape));
  std::vector<T> data(n);
  for (size_t i = 0; i < n; ++i) {
    data[i] = dtype == kFloat32 ? static_cast<T>(detail::get_le<float>(p, end, what)) : static_cast<T>(detail::get_le<double>(p, end, what));
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void write(const std::filesystem::path& path, const Tensor<T>& t, uint8_t dtype = kFloat32) {
  const auto buf = encode(t, dtype);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

template <typename T = float>
Tensor<T> read(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode<T>(buf, path.string());
}

}  // namespace tns
}  // namespace egowm
