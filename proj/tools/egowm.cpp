#include <iostream>

#include "CLI11.hpp"
#include "egowm/cli/commands.hpp"

namespace cli = egowm::cli;

int main(int argc, char** argv) {
  CLI::App app{"egowm: synthetic egocentric world model"};
  app.require_subcommand(1);

  cli::GenDataArgs gen;
  std::string gen_config;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic clips");
  gen_cmd->add_option("--seed", gen.seed, "Base seed; clip i uses seed + i");
  gen_cmd->add_option("--clips", gen.clips, "Number of clips")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--frames", gen.frames, "Frames per clip")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--size", gen.size, "Frame side in pixels")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--config", gen_config, "Run config (window length L)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  std::string scale = "paper";
  auto* audit_cmd = app.add_subcommand("shape-audit", "Print and verify stream shapes");
  audit_cmd->add_option("--scale", scale, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));

  cli::TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train on a generated dataset");
  train_cmd->add_option("--data", train.data, "Dataset directory");
  train_cmd->add_option("--config", train.config, "Run config");
  train_cmd->add_option("--out", train.out, "Output directory");

  cli::RolloutArgs roll;
  int64_t roll_steps = 0;
  auto* roll_cmd = app.add_subcommand("rollout", "Sample a rollout for a clip's prompt and actions");
  roll_cmd->add_option("--checkpoint", roll.checkpoint, "Checkpoint (or training output) directory")->required();
  roll_cmd->add_option("--clip", roll.clip, "Clip directory")->required();
  auto* steps_opt = roll_cmd->add_option("--steps", roll_steps, "Sampling steps (config default 50)");
  roll_cmd->add_option("--seed", roll.seed, "Sampling seed");
  roll_cmd->add_option("--out", roll.out, "Output directory")->required();
  roll_cmd->add_flag("--png", roll.png, "Also export lossless PNG frames");

  cli::EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  eval_cmd->add_option("--gt", ev.gt, "Ground-truth clip or dataset directory")->required();
  eval_cmd->add_option("--pred", ev.pred, "Prediction directory")->required();
  eval_cmd->add_option("--out", ev.out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kUsage;
  }

  try {
    if (*gen_cmd) return cli::cmd_gen_data(gen, cli::resolve_config(gen_config), std::cout);
    if (*audit_cmd) return cli::cmd_shape_audit(scale, std::cout);
    if (*train_cmd) return cli::cmd_train(train, std::cout);
    if (*roll_cmd) {
      if (*steps_opt) roll.steps = roll_steps;
      return cli::cmd_rollout(roll, std::cout);
    }
    if (*eval_cmd) return cli::cmd_eval(ev, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return cli::kUsage;
}
