#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "egowm/core/tns_io.hpp"
#include "egowm/geometry/trajectory_io.hpp"
#include "egowm/world/clip.hpp"

namespace egowm::world {

using Meta = std::map<std::string, std::string>;

inline Meta read_meta(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  Meta m;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ": malformed line '" + line + "'");
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

inline void write_meta(const std::filesystem::path& path, const Meta& m) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  for (const auto& [k, v] : m) os << k << '=' << v << '\n';
}

inline const std::string& meta_get(const Meta& m, const std::string& key) {
  auto it = m.find(key);
  if (it == m.end()) throw DataError("meta: missing key '" + key + "'");
  return it->second;
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

inline std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw DataError("meta: malformed number '" + item + "'");
    }
  }
  return out;
}

inline std::string join(const std::vector<double>& v) {
  std::string out;
  char buf[40];
  for (size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    if (i) out += ',';
    out += buf;
  }
  return out;
}

inline std::string color_str(const Color& c) { return join({c[0], c[1], c[2]}); }

inline Color parse_color(const std::string& s) {
  const auto v = parse_doubles(s);
  if (v.size() != 3) throw DataError("meta: color needs 3 components");
  return {static_cast<float>(v[0]), static_cast<float>(v[1]), static_cast<float>(v[2])};
}

inline void check_shape(const Tensor<float>& t, const Shape& expect, const std::string& what) {
  if (t.shape() != expect) throw DataError(what + ": shape " + egowm::to_string(t.shape()) + " expected " + egowm::to_string(expect));
}

}  // namespace detail

/// Clip directory: rgb.tns, hands.tns, masks.tns, trajectory.csv, intrinsics.csv and meta.
inline void write_clip(const std::filesystem::path& dir, const Clip& c) {
  std::filesystem::create_directories(dir);
  tns::write(dir / "rgb.tns", c.rgb);
  tns::write(dir / "hands.tns", c.hand_maps);
  tns::write(dir / "masks.tns", c.object_masks);
  geometry::write_trajectory_csv(dir / "trajectory.csv", c.trajectory);
  geometry::write_intrinsics_csv(dir / "intrinsics.csv", c.intrinsics);
  Meta m;
  m["seed"] = std::to_string(c.seed);
  m["L"] = std::to_string(c.length);
  m["S"] = std::to_string(c.size);
  std::string events;
  for (const auto& e : c.events) events += (events.empty() ? "" : ",") + std::to_string(e.frame) + (e.attach ? ":attach" : ":release");
  m["grasp_events"] = events;
  std::vector<double> att, eu, ev;
  for (size_t i = 0; i < c.attached.size(); ++i) {
    att.push_back(c.attached[i] ? 1 : 0);
    eu.push_back(c.ee_pixels[i][0]);
    ev.push_back(c.ee_pixels[i][1]);
  }
  m["attached"] = detail::join(att);
  m["ee_u"] = detail::join(eu);
  m["ee_v"] = detail::join(ev);
  m["color_object_a"] = detail::color_str(c.object_a);
  m["color_object_b"] = detail::color_str(c.object_b);
  m["color_background"] = detail::color_str(c.background);
  m["color_table"] = detail::color_str(c.table);
  write_meta(dir / "meta", m);
}

inline Clip read_clip(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("clip directory not found: " + dir.string());
  const Meta m = read_meta(dir / "meta");
  Clip c;
  try {
    c.seed = std::stoull(meta_get(m, "seed"));
    c.length = std::stoll(meta_get(m, "L"));
    c.size = std::stoll(meta_get(m, "S"));
  } catch (const std::logic_error&) {
    throw DataError("meta: malformed seed/L/S");
  }
  const int64_t L = c.length, S = c.size;
  c.rgb = tns::read<float>(dir / "rgb.tns");
  c.hand_maps = tns::read<float>(dir / "hands.tns");
  c.object_masks = tns::read<float>(dir / "masks.tns");
  detail::check_shape(c.rgb, {L, 3, S, S}, "rgb.tns");
  detail::check_shape(c.hand_maps, {L, 1, S, S}, "hands.tns");
  detail::check_shape(c.object_masks, {L, 1, S, S}, "masks.tns");
  c.trajectory = geometry::read_trajectory_csv(dir / "trajectory.csv");
  if (static_cast<int64_t>(c.trajectory.size()) != L) throw DataError("trajectory.csv: frame count differs from L");
  c.intrinsics = geometry::read_intrinsics_csv(dir / "intrinsics.csv");
  for (const auto& item : detail::split(meta_get(m, "grasp_events"), ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw DataError("meta: malformed grasp event '" + item + "'");
    const std::string kind = item.substr(colon + 1);
    if (kind != "attach" && kind != "release") throw DataError("meta: unknown grasp event '" + kind + "'");
    c.events.push_back({std::stoll(item.substr(0, colon)), kind == "attach"});
  }
  const auto att = detail::parse_doubles(meta_get(m, "attached"));
  const auto eu = detail::parse_doubles(meta_get(m, "ee_u"));
  const auto ev = detail::parse_doubles(meta_get(m, "ee_v"));
  if (static_cast<int64_t>(att.size()) != L || eu.size() != att.size() || ev.size() != att.size())
    throw DataError("meta: per-frame lists differ from L");
  for (size_t i = 0; i < att.size(); ++i) {
    c.attached.push_back(att[i] != 0);
    c.ee_pixels.push_back({eu[i], ev[i]});
  }
  c.object_a = detail::parse_color(meta_get(m, "color_object_a"));
  c.object_b = detail::parse_color(meta_get(m, "color_object_b"));
  c.background = detail::parse_color(meta_get(m, "color_background"));
  c.table = detail::parse_color(meta_get(m, "color_table"));
  return c;
}

}  // namespace egowm::world
