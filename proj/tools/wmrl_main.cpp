// Command-line front end for the world-model post-training pipeline:
//   gen-data    render the three-regime dataset archive
//   train-sft   denoising score-matching baseline from scratch
//   train-grpo  group-relative post-training against verifiable rewards
//   eval        per-regime metrics and reliability tables for a checkpoint
//   report      merge eval runs into combined CSV tables
//
// Exit codes: 0 success, 1 I/O failure, 2 config error,
//             3 variance gate refusal or guard halt, 4 numeric failure.

#include <iostream>

#include <CLI11.hpp>

#include "wmrl/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"toy action-conditioned world model with GRPO post-training"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, baseline, checkpoint;
  std::vector<std::string> regimes;
  std::vector<std::string> runs;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")
        ->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "render the dataset archive");
  add_config(gen);
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* sft = app.add_subcommand("train-sft", "train the SFT baseline");
  add_config(sft);
  sft->add_option("--data", data_dir, "dataset directory")->required();
  sft->add_option("--out", out_dir, "run directory")->required();

  CLI::App* grpo = app.add_subcommand("train-grpo", "GRPO post-training");
  add_config(grpo);
  grpo->add_option("--data", data_dir, "dataset directory")->required();
  grpo->add_option("--baseline", baseline, "baseline checkpoint")->required();
  grpo->add_option("--out", out_dir, "run directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--regimes", regimes,
                   "regimes to evaluate (default: from config)");
  eval->add_option("--out", out_dir, "output directory")->required();

  CLI::App* report = app.add_subcommand("report", "merge eval runs");
  report->add_option("--runs", runs, "eval_report.json files")->required();
  report->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      wmrl::run_gen_data(wmrl::load_experiment_config(config_path), out_dir);
    } else if (sft->parsed()) {
      wmrl::run_train_sft(wmrl::load_experiment_config(config_path), data_dir,
                          out_dir);
    } else if (grpo->parsed()) {
      wmrl::run_train_grpo(wmrl::load_experiment_config(config_path), data_dir,
                           baseline, out_dir);
    } else if (eval->parsed()) {
      const auto cfg = wmrl::load_experiment_config(config_path);
      wmrl::run_eval(cfg, checkpoint, data_dir,
                     regimes.empty() ? cfg.eval.regimes : regimes, out_dir);
    } else if (report->parsed()) {
      std::vector<std::filesystem::path> paths(runs.begin(), runs.end());
      wmrl::run_report(paths, out_dir);
    }
  } catch (const wmrl::ConfigError& err) {
    std::cerr << "config error: " << err.what() << std::endl;
    return 2;
  } catch (const wmrl::GateError& err) {
    std::cerr << err.what() << std::endl;
    return 3;
  } catch (const wmrl::NumericError& err) {
    std::cerr << "numeric failure: " << err.what() << std::endl;
    return 4;
  } catch (const wmrl::IoError& err) {
    std::cerr << "i/o error: " << err.what() << std::endl;
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << std::endl;
    return 1;
  }
  return 0;
}
