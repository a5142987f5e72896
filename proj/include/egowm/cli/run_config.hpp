#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "egowm/model/config.hpp"
#include "egowm/model/trainer.hpp"
#include "egowm/model/world_model.hpp"

namespace egowm::cli {

/// Every tunable of a run as flat key=value text. Unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 0;
  model::ModelConfig model = model::ModelConfig::desk();
  int64_t sample_steps = model::kDefaultSamplingSteps;
  double lr = 1e-5;
  double lr_final = -1;
  int64_t train_steps = 1000;
  double clip_norm = 1.0;
  int64_t codec_steps = 1500;
  double codec_lr = 2e-3;
  int64_t checkpoint_every = 0;
  int64_t log_every = 100;
  std::string data, out, checkpoint;

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{"seed",        "L",           "S",          "d",          "blocks",          "D",
                                            "heads",       "mlp_ratio",   "diffusion_steps", "beta_start", "beta_end", "steps",
                                            "lr",          "lr_final",    "train_steps", "clip_norm", "codec_steps",     "codec_lr",
                                            "checkpoint_every", "log_every", "data",      "out",        "checkpoint"};
    return k;
  }

  void set(const std::string& key, const std::string& value) {
    const auto as_int = [&]() -> int64_t {
      size_t pos = 0;
      int64_t v = 0;
      try {
        v = std::stoll(value, &pos);
      } catch (const std::logic_error&) {
        pos = 0;
      }
      if (pos == 0 || pos != value.size()) throw ConfigError("config: " + key + " expects an integer, got '" + value + "'");
      return v;
    };
    const auto as_double = [&]() -> double {
      size_t pos = 0;
      double v = 0;
      try {
        v = std::stod(value, &pos);
      } catch (const std::logic_error&) {
        pos = 0;
      }
      if (pos == 0 || pos != value.size()) throw ConfigError("config: " + key + " expects a number, got '" + value + "'");
      return v;
    };
    const auto as_count = [&]() {
      const int64_t v = as_int();
      if (v < 0) throw ConfigError("config: " + key + " must be non-negative");
      return v;
    };
    if (key == "seed") seed = static_cast<uint64_t>(as_count());
    else if (key == "L") model.frames = as_int();
    else if (key == "S") model.size = as_int();
    else if (key == "d") model.width = as_int();
    else if (key == "blocks") model.blocks = as_int();
    else if (key == "D") model.adapter_depth = as_int();
    else if (key == "heads") model.heads = as_int();
    else if (key == "mlp_ratio") model.mlp_ratio = as_int();
    else if (key == "diffusion_steps") model.diffusion_steps = as_int();
    else if (key == "beta_start") model.beta_start = as_double();
    else if (key == "beta_end") model.beta_end = as_double();
    else if (key == "steps") sample_steps = as_count();
    else if (key == "lr") lr = as_double();
    else if (key == "lr_final") lr_final = as_double();
    else if (key == "train_steps") train_steps = as_count();
    else if (key == "clip_norm") clip_norm = as_double();
    else if (key == "codec_steps") codec_steps = as_count();
    else if (key == "codec_lr") codec_lr = as_double();
    else if (key == "checkpoint_every") checkpoint_every = as_count();
    else if (key == "log_every") log_every = as_count();
    else if (key == "data") data = value;
    else if (key == "out") out = value;
    else if (key == "checkpoint") checkpoint = value;
    else throw ConfigError("config: unknown key '" + key + "'");
  }

  std::string get(const std::string& key) const {
    const auto num = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      return std::string(buf);
    };
    const std::map<std::string, std::function<std::string()>> g{
        {"seed", [&] { return std::to_string(seed); }},
        {"L", [&] { return std::to_string(model.frames); }},
        {"S", [&] { return std::to_string(model.size); }},
        {"d", [&] { return std::to_string(model.width); }},
        {"blocks", [&] { return std::to_string(model.blocks); }},
        {"D", [&] { return std::to_string(model.adapter_depth); }},
        {"heads", [&] { return std::to_string(model.heads); }},
        {"mlp_ratio", [&] { return std::to_string(model.mlp_ratio); }},
        {"diffusion_steps", [&] { return std::to_string(model.diffusion_steps); }},
        {"beta_start", [&] { return num(model.beta_start); }},
        {"beta_end", [&] { return num(model.beta_end); }},
        {"steps", [&] { return std::to_string(sample_steps); }},
        {"lr", [&] { return num(lr); }},
        {"lr_final", [&] { return num(lr_final); }},
        {"train_steps", [&] { return std::to_string(train_steps); }},
        {"clip_norm", [&] { return num(clip_norm); }},
        {"codec_steps", [&] { return std::to_string(codec_steps); }},
        {"codec_lr", [&] { return num(codec_lr); }},
        {"checkpoint_every", [&] { return std::to_string(checkpoint_every); }},
        {"log_every", [&] { return std::to_string(log_every); }},
        {"data", [&] { return data; }},
        {"out", [&] { return out; }},
        {"checkpoint", [&] { return checkpoint; }}};
    const auto it = g.find(key);
    if (it == g.end()) throw ConfigError("config: unknown key '" + key + "'");
    return it->second();
  }

  /// Applies key=value lines; blank lines and '#' comments are ignored.
  void merge(std::istream& is, const std::string& origin = "config") {
    std::string line;
    int n = 0;
    while (std::getline(is, line)) {
      ++n;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key=value");
      const auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  static RunConfig parse(const std::string& text) {
    RunConfig c;
    std::istringstream is(text);
    c.merge(is);
    c.validate();
    return c;
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    RunConfig c;
    c.merge(is, path.string());
    c.validate();
    return c;
  }

  void validate() const {
    model.validate();
    if (!(lr > 0)) throw ConfigError("config: lr must be positive");
    if (!(clip_norm >= 0)) throw ConfigError("config: clip_norm must be non-negative");
  }

  std::string to_text() const {
    std::string s;
    for (const auto& k : keys()) s += k + "=" + get(k) + "\n";
    return s;
  }

  /// Writes the resolved configuration as `dir/config.txt`.
  void write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "config.txt");
    os << to_text();
    if (!os) throw DataError("cannot write " + (dir / "config.txt").string());
  }

  model::TrainOptions train_options() const {
    model::TrainOptions o;
    o.steps = train_steps;
    o.lr = lr;
    o.lr_final = lr_final;
    o.clip_norm = clip_norm;
    o.seed = seed;
    o.codec_steps = codec_steps;
    o.codec_lr = codec_lr;
    return o;
  }
};

}  // namespace egowm::cli
