#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "egowm/cli/parallel.hpp"
#include "egowm/cli/png.hpp"
#include "egowm/cli/run_config.hpp"
#include "egowm/eval/report.hpp"
#include "egowm/model/audit.hpp"
#include "egowm/model/checkpoint.hpp"
#include "egowm/model/trainer.hpp"
#include "egowm/world/clip_io.hpp"

namespace egowm::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

/// Maps a library failure onto the process exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
  if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return kData;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kData;
  return kData;
}

inline bool is_clip_dir(const fs::path& p) { return fs::is_regular_file(p / "meta"); }

/// A clip directory itself, or every clip directory directly below `root`, sorted by name.
inline std::vector<fs::path> clip_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  if (is_clip_dir(root)) return {root};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && is_clip_dir(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no clip directories in " + root.string());
  return out;
}

inline std::string clip_name(int64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "clip_%04lld", static_cast<long long>(i));
  return buf;
}

struct GenDataArgs {
  uint64_t seed = 0;
  int64_t clips = 2;
  int64_t frames = 9;
  int64_t size = 32;
  fs::path out;
};

/// Writes clip_0000 ... with clip i generated from seed + i, plus the sliding windows of the
/// configured horizon recorded in each meta.
inline int cmd_gen_data(const GenDataArgs& a, const RunConfig& cfg, std::ostream& log) {
  if (a.clips < 1) throw ConfigError("gen-data: --clips must be positive");
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) throw DataError("cannot create output directory " + a.out.string());
  RunConfig resolved = cfg;
  resolved.seed = a.seed;
  resolved.out = a.out.string();
  resolved.write(a.out);
  const int64_t W = cfg.model.frames;
  parallel_for(a.clips, [&](int64_t i) {
    const world::Clip clip = world::generate_clip(a.seed + static_cast<uint64_t>(i), a.frames, a.size);
    const fs::path dir = a.out / clip_name(i);
    world::write_clip(dir, clip);
    world::Meta m = world::read_meta(dir / "meta");
    std::string starts;
    for (int64_t s : world::window_starts(a.frames, W)) starts += (starts.empty() ? "" : ",") + std::to_string(s);
    m["window_length"] = std::to_string(W);
    m["window_stride"] = std::to_string(world::kWindowStride);
    m["window_starts"] = starts;
    world::write_meta(dir / "meta", m);
  });
  log << "wrote " << a.clips << " clips to " << a.out.string() << "\n";
  return kOk;
}

inline std::string shape_text(const Shape& s) {
  std::string t = "(";
  for (size_t i = 0; i < s.size(); ++i) t += (i ? "," : "") + std::to_string(s[i]);
  return t + ")";
}

/// Analytic stream shapes. Paper scale is compared with the published shapes; desk scale with an
/// executed forward pass. Returns kData on any mismatch.
inline int cmd_shape_audit(const std::string& scale, std::ostream& out) {
  if (scale != "paper" && scale != "desk") throw ConfigError("shape-audit: --scale must be paper or desk");
  const model::ModelConfig cfg = scale == "paper" ? model::ModelConfig::paper() : model::ModelConfig::desk();
  const auto entries = model::shape_audit(cfg);
  std::vector<model::AuditEntry> expected;
  if (scale == "paper") {
    expected = model::published_shapes();
  } else {
    model::WorldModel<float> m(cfg, 0);
    const world::Clip clip = world::generate_clip(0, cfg.frames, cfg.size);
    const auto p = m.prepare(model::Prompt::from_clip(clip), clip.actions());
    NoGradGuard guard;
    const auto c = m.condition(p);
    expected = {{"codec.latent", m.codec().encode(ops::constant(world::channels_first(clip.rgb))).shape()},
                {"hke.tokens", c.hke->tokens.shape()},
                {"eme.tokens", c.eme->tokens.shape()},
                {"oee.latent", p.object_latent.shape()},
                {"oee.tokens", c.oee->tokens.shape()},
                {"anchor", c.anchor.shape()}};
  }
  int status = kOk;
  out << "scale " << scale << "\n";
  for (const auto& e : entries) {
    const auto it = std::find_if(expected.begin(), expected.end(), [&](const auto& x) { return x.name == e.name; });
    std::string verdict;
    if (it != expected.end()) {
      verdict = it->shape == e.shape ? " ok" : " MISMATCH expected " + shape_text(it->shape);
      if (it->shape != e.shape) status = kData;
    }
    out << e.name << " " << shape_text(e.shape) << verdict << "\n";
  }
  for (const auto& x : expected)
    if (!model::find_entry(entries, x.name)) {
      out << x.name << " missing\n";
      status = kData;
    }
  return status;
}

inline std::vector<world::Clip> read_dataset(const fs::path& root) {
  std::vector<world::Clip> clips;
  for (const auto& d : clip_dirs(root)) clips.push_back(world::read_clip(d));
  return clips;
}

struct TrainArgs {
  fs::path data, config, out;
};

inline RunConfig resolve_config(const fs::path& config) {
  RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::load(config);
  cfg.validate();
  return cfg;
}

/// Trains on every clip under --data; resumes from out/checkpoint when present.
/// Writes out/config.txt, out/loss.csv, out/checkpoint/ and out/summary.txt.
inline int cmd_train(const TrainArgs& a, std::ostream& log) {
  RunConfig cfg = resolve_config(a.config);
  if (!a.data.empty()) cfg.data = a.data.string();
  if (!a.out.empty()) cfg.out = a.out.string();
  if (cfg.data.empty() || cfg.out.empty()) throw ConfigError("train: --data and --out are required");
  const auto clips = read_dataset(cfg.data);
  const fs::path out = cfg.out, ckpt = out / "checkpoint";
  cfg.checkpoint = ckpt.string();
  cfg.write(out);

  model::WorldModel<float> m(cfg.model, cfg.seed);
  model::Trainer<float> trainer(m, clips, cfg.train_options());
  const bool resumed = fs::exists(ckpt / "manifest.txt");
  if (resumed) {
    trainer.resume(ckpt);
    log << "resumed at step " << trainer.step_index() << "\n";
  }
  const auto save = [&] {
    trainer.save(ckpt);
    cfg.write(ckpt);
  };
  if (trainer.step_index() == 0) {
    const auto codec = trainer.pretrain_codec();
    log << "codec pretraining: " << codec.size() << " steps, final loss " << (codec.empty() ? 0.0 : codec.back()) << "\n";
  }
  std::ofstream csv(out / "loss.csv", resumed ? std::ios::app : std::ios::trunc);
  if (!resumed) csv << "step,loss,lr\n";
  double ema = -1;
  const auto t0 = std::chrono::steady_clock::now();
  trainer.run([&](const model::TrainRecord& r) {
    char line[96];
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g\n", static_cast<long long>(r.step), r.loss, r.lr);
    csv << line;
    ema = ema < 0 ? r.loss : 0.99 * ema + 0.01 * r.loss;
    if (cfg.log_every > 0 && (r.step + 1) % cfg.log_every == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log << "step " << r.step + 1 << " loss(ema) " << ema << " lr " << r.lr << " " << secs << "s\n";
    }
    if (cfg.checkpoint_every > 0 && (r.step + 1) % cfg.checkpoint_every == 0) {
      csv.flush();
      save();
    }
  });
  csv.flush();
  save();
  const double eval_loss = trainer.evaluation_loss();
  std::ofstream summary(out / "summary.txt");
  summary << "steps=" << trainer.step_index() << "\nwindows=" << trainer.windows() << "\neval_loss=" << eval_loss << "\n";
  log << "done: " << trainer.step_index() << " steps, evaluation loss " << eval_loss << "\n";
  return kOk;
}

/// Configuration stored with a checkpoint (in the directory itself or its parent).
inline RunConfig checkpoint_config(const fs::path& ckpt) {
  for (const fs::path& p : {ckpt / "config.txt", ckpt.parent_path() / "config.txt"})
    if (fs::exists(p)) return RunConfig::load(p);
  throw DataError("no config.txt next to checkpoint " + ckpt.string());
}

/// Locates the checkpoint directory: the path itself or its checkpoint/ child.
inline fs::path checkpoint_dir(const fs::path& p) {
  if (fs::exists(p / "manifest.txt")) return p;
  if (fs::exists(p / "checkpoint" / "manifest.txt")) return p / "checkpoint";
  throw DataError("no checkpoint at " + p.string());
}

struct RolloutArgs {
  fs::path checkpoint, clip, out;
  std::optional<int64_t> steps;
  uint64_t seed = 0;
  bool png = false;
};

/// Samples a rollout for the clip's first frame and action script: out/rgb.tns [L,3,S,S].
inline int cmd_rollout(const RolloutArgs& a, std::ostream& log) {
  const fs::path ckpt = checkpoint_dir(a.checkpoint);
  RunConfig cfg = checkpoint_config(ckpt);
  if (a.steps) cfg.sample_steps = *a.steps;
  if (cfg.sample_steps < 0) throw ConfigError("rollout: --steps must be non-negative");
  const world::Clip clip = world::read_clip(a.clip);
  model::WorldModel<float> m(cfg.model, cfg.seed);
  model::load_checkpoint(ckpt, m.parameters(), cfg.model);
  Rng rng(a.seed);
  const model::Rollout r = m.sample_rollout(model::Prompt::from_clip(clip), clip.actions(), cfg.sample_steps, rng);
  for (float v : r.frames.span())
    if (!std::isfinite(v)) throw NumericError("rollout produced non-finite frames");
  cfg.out = a.out.string();
  cfg.checkpoint = ckpt.string();
  cfg.write(a.out);
  tns::write(a.out / "rgb.tns", r.frames);
  std::ofstream info(a.out / "rollout.txt");
  info << "source=" << fs::absolute(a.clip).string() << "\nseed=" << a.seed << "\nsteps=" << cfg.sample_steps << "\nframes=" << r.length() << "\n";
  if (a.png)
    for (int64_t i = 0; i < r.length(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%03lld.png", static_cast<long long>(i));
      write_png(a.out / name, r.frame(i));
    }
  log << "wrote " << r.length() << " frames to " << a.out.string() << "\n";
  return kOk;
}

struct EvalArgs {
  fs::path gt, pred, out;
};

/// Simulator states of a stored clip, regenerated from its seed when the stored frames match.
inline void attach_states(world::Clip& clip) {
  const world::Clip regen = world::generate_clip(clip.seed, clip.length, clip.size);
  if (regen.rgb.size() == clip.rgb.size() && std::equal(regen.rgb.data(), regen.rgb.data() + regen.rgb.size(), clip.rgb.data()))
    clip.states = regen.states;
}

/// Compares predictions with ground truth clip by clip: out/report.csv and out/summary.txt.
/// --gt and --pred are either single clip directories or parents of equally named ones.
inline int cmd_eval(const EvalArgs& a, std::ostream& log) {
  const auto gt_dirs = clip_dirs(a.gt);
  const bool single = is_clip_dir(a.gt);
  std::vector<std::pair<fs::path, fs::path>> pairs;
  for (const auto& g : gt_dirs) {
    const fs::path p = single ? a.pred : a.pred / g.filename();
    if (!fs::exists(p / "rgb.tns")) throw DataError("prediction missing for " + g.filename().string() + " (" + (p / "rgb.tns").string() + ")");
    pairs.push_back({g, p});
  }
  std::vector<eval::ClipMetrics> rows(pairs.size());
  parallel_for(static_cast<int64_t>(pairs.size()), [&](int64_t i) {
    const auto& [g, p] = pairs[static_cast<size_t>(i)];
    world::Clip clip = world::read_clip(g);
    attach_states(clip);
    const Tensor<float> pred = tns::read<float>(p / "rgb.tns");
    if (pred.shape() != clip.rgb.shape())
      throw DataError("layout mismatch for " + g.filename().string() + ": prediction " + egowm::to_string(pred.shape()) + " vs " + egowm::to_string(clip.rgb.shape()));
    rows[static_cast<size_t>(i)] = eval::evaluate_clip(clip, pred, g.filename().string());
  });
  RunConfig cfg;
  cfg.data = a.gt.string();
  cfg.out = a.out.string();
  cfg.write(a.out);
  std::ofstream csv(a.out / "report.csv");
  eval::write_report_csv(csv, rows);
  std::ofstream summary(a.out / "summary.txt");
  eval::write_report_summary(summary, rows);
  if (!csv || !summary) throw DataError("cannot write report in " + a.out.string());
  eval::write_report_summary(log, rows);
  return kOk;
}

}  // namespace egowm::cli
