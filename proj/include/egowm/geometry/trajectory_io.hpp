#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "egowm/geometry/camera.hpp"

namespace egowm::geometry {

inline constexpr const char* kTrajectoryHeader = "frame,r11,r12,r13,r21,r22,r23,r31,r32,r33,tx,ty,tz";
inline constexpr const char* kIntrinsicsHeader = "fx,fy,cx,cy";

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<double> parse_row(const std::string& line, size_t expect, const std::string& what) {
  std::vector<double> vals;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      size_t used = 0;
      vals.push_back(std::stod(cell, &used));
    } catch (const std::exception&) {
      throw DataError(what + ": malformed number '" + cell + "'");
    }
  }
  if (vals.size() != expect) throw DataError(what + ": expected " + std::to_string(expect) + " columns, got " + std::to_string(vals.size()));
  return vals;
}
}  // namespace detail

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << kTrajectoryHeader << '\n';
  for (size_t f = 0; f < traj.size(); ++f) {
    os << f;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) os << ',' << detail::fmt_double(traj[f].R(i, j));
    for (int i = 0; i < 3; ++i) os << ',' << detail::fmt_double(traj[f].t(i));
    os << '\n';
  }
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kTrajectoryHeader) throw DataError(path.string() + ": unexpected trajectory header");
  Trajectory traj;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto v = detail::parse_row(line, 13, path.string());
    if (static_cast<size_t>(v[0]) != traj.size()) throw DataError(path.string() + ": frames out of order");
    Pose p;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) p.R(i, j) = v[static_cast<size_t>(1 + 3 * i + j)];
    for (int i = 0; i < 3; ++i) p.t(i) = v[static_cast<size_t>(10 + i)];
    traj.push_back(p);
  }
  return traj;
}

inline void write_intrinsics_csv(const std::filesystem::path& path, const Intrinsics& k) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << kIntrinsicsHeader << '\n'
     << detail::fmt_double(k.fx) << ',' << detail::fmt_double(k.fy) << ',' << detail::fmt_double(k.cx) << ','
     << detail::fmt_double(k.cy) << '\n';
}

inline Intrinsics read_intrinsics_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kIntrinsicsHeader) throw DataError(path.string() + ": unexpected intrinsics header");
  if (!std::getline(is, line)) throw DataError(path.string() + ": missing intrinsics row");
  auto v = detail::parse_row(line, 4, path.string());
  Intrinsics k{v[0], v[1], v[2], v[3]};
  k.validate();
  return k;
}

}  // namespace egowm::geometry
