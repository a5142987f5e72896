#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "egowm/core/optim.hpp"
#include "egowm/core/tns_io.hpp"
#include "egowm/model/config.hpp"

namespace egowm::model {

inline constexpr const char* kCheckpointFormat = "egowm-checkpoint 1";

/// Scalar bookkeeping stored next to the tensors.
struct CheckpointInfo {
  uint64_t config_hash = 0;
  int64_t step = 0;
  std::map<std::string, std::string> extra;
};

namespace detail {

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <typename T>
uint8_t dtype_code() {
  return std::is_same_v<T, double> ? tns::kFloat64 : tns::kFloat32;
}

}  // namespace detail

/// Writes parameters (and Adam moments when given) into `dir`, replacing it atomically:
/// dir/manifest.txt, dir/params/<name>.tns, dir/adam/{m,v}/<name>.tns.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ParameterSet<T>& ps, const ModelConfig& cfg, const CheckpointInfo& info,
                     Adam<T>* adam = nullptr) {
  namespace fs = std::filesystem;
  const fs::path tmp = dir.string() + ".partial";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp / "params", ec);
  if (ec) throw DataError("cannot create checkpoint directory " + tmp.string() + ": " + ec.message());

  std::ostringstream manifest;
  manifest << kCheckpointFormat << "\n";
  manifest << "config_hash " << detail::hex64(cfg.hash()) << "\n";
  manifest << "step " << info.step << "\n";
  for (const auto& [k, v] : info.extra) manifest << "extra " << k << " " << v << "\n";
  for (const auto& p : ps.all()) {
    manifest << "param " << p.name();
    for (auto e : p.shape()) manifest << " " << e;
    manifest << "\n";
    tns::write(tmp / "params" / (p.name() + ".tns"), p.value(), detail::dtype_code<T>());
  }
  if (adam) {
    fs::create_directories(tmp / "adam" / "m");
    fs::create_directories(tmp / "adam" / "v");
    manifest << "adam_steps " << adam->steps_taken() << "\n";
    for (size_t i = 0; i < adam->params().size(); ++i) {
      const std::string& n = adam->params()[i].name();
      manifest << "adam " << n << "\n";
      tns::write(tmp / "adam" / "m" / (n + ".tns"), adam->first_moments()[i], detail::dtype_code<T>());
      tns::write(tmp / "adam" / "v" / (n + ".tns"), adam->second_moments()[i], detail::dtype_code<T>());
    }
  }
  {
    std::ofstream os(tmp / "manifest.txt");
    os << manifest.str();
    if (!os) throw DataError("failed writing checkpoint manifest in " + tmp.string());
  }
  fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) throw DataError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
}

/// Loads a checkpoint written for the same configuration. Every parameter must be present with
/// its registered shape; Adam moments are restored when `adam` is given and they were saved.
template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& dir, ParameterSet<T>& ps, const ModelConfig& cfg, Adam<T>* adam = nullptr) {
  std::ifstream is(dir / "manifest.txt");
  if (!is) throw DataError("no checkpoint manifest in " + dir.string());
  std::string line;
  std::getline(is, line);
  if (line != kCheckpointFormat) throw DataError(dir.string() + ": not a checkpoint (header '" + line + "')");

  CheckpointInfo info;
  std::map<std::string, Shape> shapes;
  std::vector<std::string> adam_names;
  int64_t adam_steps = -1;
  std::string hash_text;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "config_hash") {
      ls >> hash_text;
    } else if (key == "step") {
      ls >> info.step;
    } else if (key == "extra") {
      std::string k, v;
      ls >> k;
      std::getline(ls >> std::ws, v);
      info.extra[k] = v;
    } else if (key == "param") {
      std::string name;
      ls >> name;
      Shape s;
      for (int64_t e; ls >> e;) s.push_back(e);
      shapes[name] = s;
    } else if (key == "adam_steps") {
      ls >> adam_steps;
    } else if (key == "adam") {
      std::string name;
      ls >> name;
      adam_names.push_back(name);
    } else if (!key.empty()) {
      throw DataError(dir.string() + ": unknown manifest entry '" + key + "'");
    }
  }
  if (hash_text != detail::hex64(cfg.hash())) {
    throw DataError(dir.string() + ": checkpoint was written for a different model configuration");
  }
  info.config_hash = cfg.hash();

  for (auto& p : ps.all()) {
    const auto it = shapes.find(p.name());
    if (it == shapes.end()) throw DataError(dir.string() + ": parameter " + p.name() + " missing");
    if (it->second != p.shape()) throw DataError(dir.string() + ": parameter " + p.name() + " has shape " + egowm::to_string(it->second));
    Tensor<T> v = tns::read<T>(dir / "params" / (p.name() + ".tns"));
    if (v.shape() != p.shape()) throw DataError(dir.string() + ": tensor file for " + p.name() + " has the wrong shape");
    p.mutable_value() = std::move(v);
  }
  if (adam && adam_steps >= 0) {
    if (adam_names.size() != adam->params().size()) throw DataError(dir.string() + ": optimizer state does not match parameter list");
    for (size_t i = 0; i < adam_names.size(); ++i) {
      if (adam_names[i] != adam->params()[i].name()) throw DataError(dir.string() + ": optimizer state order differs at " + adam_names[i]);
      adam->first_moments()[i] = tns::read<T>(dir / "adam" / "m" / (adam_names[i] + ".tns"));
      adam->second_moments()[i] = tns::read<T>(dir / "adam" / "v" / (adam_names[i] + ".tns"));
    }
    adam->set_steps_taken(adam_steps);
  }
  return info;
}

}  // namespace egowm::model
