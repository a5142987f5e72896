// Acceptance suite: one PASS/FAIL line per primary criterion, each with its time budget.
// Optional arguments restrict the run to the named criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "egowm/eval/contact.hpp"
#include "egowm/eval/report.hpp"
#include "egowm/model/audit.hpp"
#include "egowm/model/trainer.hpp"
#include "support/metric_oracles.hpp"
#include "support/model_checks.hpp"
#include "support/primitive_checks.hpp"

namespace {

using namespace egowm;
using geometry::Mat3;
using geometry::Vec3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

bool bit_equal(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

Outcome shape_audit() {
  const auto entries = model::shape_audit(model::ModelConfig::paper());
  int mismatches = 0;
  for (const auto& e : model::published_shapes()) {
    const Shape* got = model::find_entry(entries, e.name);
    if (!got || *got != e.shape) ++mismatches;
  }
  const Shape* eme = model::find_entry(entries, "eme.tokens");
  const bool tokens = eme && (*eme)[0] == 18900;
  return {mismatches == 0 && tokens, std::to_string(model::published_shapes().size()) + " published shapes, " + std::to_string(mismatches) +
                                         " mismatches, N_EME=" + (eme ? std::to_string((*eme)[0]) : "missing")};
}

Outcome zero_effect() {
  const model::ModelConfig cfg = model::ModelConfig::desk();
  model::WorldModel<float> m(cfg, 3);
  Rng init(4);
  for (auto* p : m.parameters().pointers())
    if (p->name().rfind("dit.head.", 0) == 0) p->mutable_value() = init.normal_tensor<float>(p->shape(), 0.3);
  if (m.gamma_h().value()[0] != 0.0f) return {false, "gamma_h is not zero at init"};
  const world::Clip clip = world::generate_clip(2, cfg.frames, cfg.size);
  const auto prepared = m.prepare(model::Prompt::from_clip(clip), clip.actions());
  Rng rng(5);
  int compared = 0, differing = 0;
  bool counts_ok = true;
  NoGradGuard guard;
  for (int trial = 0; trial < 4; ++trial) {
    const Tensor<float> z = rng.normal_tensor<float>(m.latent_shape());
    const double t = static_cast<double>(rng.uniform_int(1, cfg.diffusion_steps));
    const auto predict = [&](model::StreamSelection sel) { return m.denoise_predict(ops::constant(z), t, m.condition(prepared, sel)).value(); };
    const auto full = predict({true, true, true});
    for (model::StreamSelection sel : {model::StreamSelection{false, true, true}, {true, false, true}, {false, false, true}}) {
      ++compared;
      differing += !bit_equal(full, predict(sel));
    }
    const auto without_oee = predict({true, true, false});
    counts_ok = counts_ok && without_oee.shape() == full.shape() && full.shape() == m.latent_shape();
  }
  return {differing == 0 && counts_ok, std::to_string(compared) + " stream ablations bit-identical: " + std::to_string(compared - differing) +
                                           ", token count preserved with OEE: " + (counts_ok ? "yes" : "no")};
}

Outcome gradient_suite() {
  const auto checks = test_support::primitive_checks();
  double worst = 0;
  std::string worst_name;
  const int instances = 20;
  for (size_t c = 0; c < checks.size(); ++c) {
    Rng rng(1000 + c);
    for (int i = 0; i < instances; ++i) {
      const auto r = checks[c].run(rng);
      if (r.max_rel_error > worst) worst = r.max_rel_error, worst_name = checks[c].name;
    }
  }
  Rng rng(77);
  double e2e = 0;
  for (int i = 0; i < instances; ++i) e2e = std::max(e2e, test_support::end_to_end_loss_check(rng).max_rel_error);
  return {worst <= 1e-4 && e2e <= 1e-4, std::to_string(checks.size()) + " primitives x " + std::to_string(instances) + " instances, worst " +
                                            fmt("%.2e", worst) + " (" + worst_name + "); end-to-end x " + std::to_string(instances) +
                                            " worst " + fmt("%.2e", e2e) + "; tol 1e-4"};
}

/// |sample mean - mean| and |sample var - var| in units of their standard errors.
std::pair<double, double> se_gaps(const Tensor<double>& x, double mean, double var) {
  const double n = static_cast<double>(x.size());
  double m = 0, v = 0;
  for (double e : x.span()) m += e;
  m /= n;
  for (double e : x.span()) v += (e - m) * (e - m);
  v /= n - 1;
  return {std::abs(m - mean) / std::sqrt(var / n), std::abs(v - var) / std::sqrt(2 * var * var / (n - 1))};
}

Outcome diffusion_consistency() {
  const model::NoiseSchedule s;
  double worst = 0;
  Rng rng(3);
  for (const auto& [t, z0] : std::vector<std::pair<int64_t, double>>{{1, 0.4}, {50, 1.1}, {300, -1.3}, {1000, 0.8}}) {
    Tensor<double> z(Shape{10000}, z0);
    for (int64_t k = 1; k <= t; ++k) z = model::noising_step(z, k, s, rng);
    const double ab = s.alpha_bar(t);
    const auto [dm, dv] = se_gaps(z, std::sqrt(ab) * z0, 1 - ab);
    worst = std::max({worst, dm, dv});
  }
  const auto eps = rng.normal_tensor<float>(Shape{16, 3, 4, 4});
  const float loss = ops::mse(ops::constant(eps), ops::constant(eps)).value()[0];
  return {worst <= 4 && loss == 0.0f, "composed noising vs closed form over 10000 samples at t=1,50,300,1000: worst gap " + fmt("%.2f", worst) +
                                          " SE (limit 4); loss at perfect prediction " + fmt("%g", loss)};
}

geometry::Trajectory wavy(int n) {
  geometry::Trajectory t;
  for (int i = 0; i < n; ++i)
    t.push_back({geometry::rotation_about(Vec3(0.2, 1, 0.3), 0.05 * i), Vec3(0.1 * i, 0.03 * i * i, std::sin(0.7 * i))});
  return t;
}

Outcome metric_oracles() {
  const auto r = test_support::run_mask_oracles(2024, 100);
  bool exact = true;
  Tensor<float> empty(Shape{16, 16}), blob(Shape{16, 16}), dot(Shape{16, 16}), square(Shape{16, 16});
  for (int64_t y = 3; y < 7; ++y)
    for (int64_t x = 2; x < 12; ++x) blob[y * 16 + x] = 1.0f;
  dot[5 * 16 + 5] = 1.0f;
  for (int64_t y = 4; y < 12; ++y)
    for (int64_t x = 4; x < 12; ++x) square[y * 16 + x] = 1.0f;
  exact = exact && eval::ope(empty, empty) == 0.0 && eval::ope(empty, blob) == 1.0 && eval::ope(blob, empty) == 1.0;
  exact = exact && !eval::ooe(dot, blob) && !eval::ooe(square, blob) && eval::ooe(blob, blob) == 0.0;

  const auto gt = wavy(10);
  const Mat3 Q = geometry::rotation_about(Vec3(1, -2, 0.5), 0.9);
  geometry::Trajectory copy;
  for (const auto& p : gt) copy.push_back({Q * p.R, 2.5 * (Q * p.t) + Vec3(1, 2, 3)});
  const auto sim = eval::trajectory_errors(copy, gt);
  const double sim_worst = std::max({sim.ate, sim.rre, sim.rpe});

  const Vec3 axis(0.3, 0.4, 1.0);
  geometry::Trajectory base, rotated;
  for (int i = 0; i < 9; ++i) {
    const Vec3 t(0.05 * i, 0.02 * i * i, 0.01 * std::cos(i));
    base.push_back({geometry::rotation_about(axis, 0.1 * i), t});
    rotated.push_back({geometry::rotation_about(axis, 0.1 * i + 2.0 * M_PI / 180.0 * i), t});
  }
  const double rre_gap = std::abs(eval::trajectory_errors(rotated, base).rre - 2.0);
  const bool pass = r.max_error <= 1e-9 && r.gate_mismatches == 0 && exact && sim_worst <= 1e-6 && rre_gap <= 1e-6;
  return {pass, std::to_string(r.cases) + " masks vs pixel enumeration max error " + fmt("%.2e", r.max_error) + ", gate mismatches " +
                    std::to_string(r.gate_mismatches) + ", penalty/gate cases " + (exact ? "exact" : "WRONG") +
                    "; similarity copy max(ATE,RRE,RPE) " + fmt("%.2e", sim_worst) + "; 2 deg/step RRE error " + fmt("%.2e", rre_gap)};
}

Outcome plucker_invariance() {
  Rng rng(9);
  const geometry::Intrinsics K = geometry::Intrinsics::from_fov(32, 1.2);
  const auto random_pose = [&] {
    const Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    const Mat3 R = geometry::rotation_about(axis, rng.uniform(-M_PI, M_PI));
    return geometry::Pose{R, Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2))};
  };
  int identical = 0;
  double worst_dot = 0;
  const int trials = 10;
  for (int trial = 0; trial < trials; ++trial) {
    geometry::Trajectory world, moved;
    for (int i = 0; i < 9; ++i) world.push_back(random_pose());
    const geometry::Pose g = random_pose();
    for (const auto& p : world) moved.push_back(g * p);
    const auto a = geometry::plucker_volume<float>(K, geometry::relative_trajectory(world), 32, 32);
    const auto b = geometry::plucker_volume<float>(K, geometry::relative_trajectory(moved), 32, 32);
    identical += bit_equal(a, b);
    const int64_t plane = a.size() / 6;
    for (int64_t px = 0; px < plane; ++px) {
      double dot = 0;
      for (int64_t c = 0; c < 3; ++c) dot += double(a[c * plane + px]) * double(a[(3 + c) * plane + px]);
      worst_dot = std::max(worst_dot, std::abs(dot));
    }
  }
  return {identical == trials && worst_dot <= 1e-5, std::to_string(identical) + "/" + std::to_string(trials) +
                                                        " re-originated trajectories bit-identical; max |d.m| " + fmt("%.2e", worst_dot) +
                                                        " (limit 1e-5)"};
}

/// Shared state of the overfit run, reused by the contact criterion.
struct OverfitRun {
  bool done = false;
  std::vector<world::Clip> clips;
  std::vector<model::Rollout> rollouts;
};

OverfitRun& overfit_state() {
  static OverfitRun run;
  return run;
}

model::TrainOptions overfit_options() {
  model::TrainOptions o;
  o.steps = 20000;
  o.lr = 1e-3;
  o.lr_final = 1e-6;
  o.clip_norm = 1.0;
  o.seed = 7;
  o.codec_steps = 1500;
  o.codec_lr = 2e-3;
  return o;
}

Outcome overfit() {
  auto& st = overfit_state();
  model::ModelConfig cfg = model::ModelConfig::desk();
  cfg.width = 64;
  cfg.blocks = 4;
  cfg.frames = 9;
  cfg.size = 32;
  st.clips = {world::generate_clip(0, cfg.frames, cfg.size), world::generate_clip(1, cfg.frames, cfg.size)};
  model::WorldModel<float> m(cfg, 0);
  model::Trainer<float> trainer(m, st.clips, overfit_options());
  trainer.pretrain_codec();
  trainer.run();
  const double loss = trainer.evaluation_loss();

  std::string psnrs;
  bool psnr_ok = true, deterministic = true;
  for (const auto& clip : st.clips) {
    Rng rng(5), again(5);
    st.rollouts.push_back(m.sample_rollout(model::Prompt::from_clip(clip), clip.actions(), model::kDefaultSamplingSteps, rng));
    const auto repeat = m.sample_rollout(model::Prompt::from_clip(clip), clip.actions(), model::kDefaultSamplingSteps, again);
    deterministic = deterministic && bit_equal(st.rollouts.back().frames, repeat.frames);
    const double p = eval::video_psnr(clip.rgb, st.rollouts.back().frames);
    psnr_ok = psnr_ok && p > 25.0;
    psnrs += (psnrs.empty() ? "" : ", ") + fmt("%.2f", p);
  }
  st.done = true;
  return {loss < 0.05 && psnr_ok && deterministic, "d=64, 4 blocks, L=9, 32x32, 2 clips, " + std::to_string(trainer.step_index()) +
                                                       " steps: evaluation loss " + fmt("%.4f", loss) + " (limit 0.05), rollout PSNR " + psnrs +
                                                       " dB (limit 25), deterministic: " + (deterministic ? "yes" : "no")};
}

Outcome contact_sanity() {
  auto& st = overfit_state();
  if (!st.done) overfit();
  std::string rs;
  bool pass = true;
  for (size_t i = 0; i < st.clips.size(); ++i) {
    const auto& clip = st.clips[i];
    const eval::Palette palette{clip.background, clip.table, clip.object_a, clip.object_b};
    std::vector<Tensor<float>> masks;
    for (int64_t f = 0; f < st.rollouts[i].length(); ++f) masks.push_back(eval::segment_object(st.rollouts[i].frame(f), palette));
    const auto r = eval::contact_correlation(masks, clip.ee_pixels, clip.attached);
    pass = pass && r && *r > 0.7;
    rs += (rs.empty() ? "" : ", ") + (r ? fmt("%.3f", *r) : std::string("undefined"));
  }
  return {pass, "Pearson r of generated mask centroid vs end-effector displacement over attached frames: " + rs + " (limit 0.7)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::vector<Criterion> criteria{
      {"shape_audit", 1, shape_audit},
      {"zero_effect_at_init", 10, zero_effect},
      {"gradient_suite", 120, gradient_suite},
      {"diffusion_consistency", 60, diffusion_consistency},
      {"metric_oracles", 60, metric_oracles},
      {"plucker_invariance", 10, plucker_invariance},
      {"end_to_end_overfit", 1800, overfit},
      {"contact_sanity", 60, contact_sanity},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %-22s %s [%.2f s of %.0f s%s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs, c.budget_seconds,
                in_time ? "" : ", over budget");
  }
  return failures == 0 ? 0 : 1;
}
