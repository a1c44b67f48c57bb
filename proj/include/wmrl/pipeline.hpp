#pragma once

#include "wmrl/config.hpp"

namespace wmrl {

// Variance gate refusal or mid-run reward-collapse halt (exit code 3).
struct GateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void run_gen_data(const ExperimentConfig& cfg,
                  const std::filesystem::path& out_dir);

void run_train_sft(const ExperimentConfig& cfg,
                   const std::filesystem::path& data_dir,
                   const std::filesystem::path& out_dir);

void run_train_grpo(const ExperimentConfig& cfg,
                    const std::filesystem::path& data_dir,
                    const std::filesystem::path& baseline_checkpoint,
                    const std::filesystem::path& out_dir);

void run_eval(const ExperimentConfig& cfg,
              const std::filesystem::path& checkpoint,
              const std::filesystem::path& data_dir,
              const std::vector<std::string>& regimes,
              const std::filesystem::path& out_dir);

void run_report(const std::vector<std::filesystem::path>& reports,
                const std::filesystem::path& out_dir);

// Shared helpers (used by the CLI commands above and by tests).

Eigen::VectorXd flatten_actions(const std::vector<Action6DoF>& actions);

struct EncodedContext {
  DiffusionContext context;
  std::vector<Action6DoF> actions;
  Frame x0;
  int id = 0;
};
EncodedContext encode_context(const Sequence& seq, const LatentCodec& codec,
                              bool mirrored);

SftItem make_sft_item(const Sequence& seq, const LatentCodec& codec);

DenoiserConfig make_denoiser_config(const ModelConfig& model, int horizon,
                                    int height, int width);

// stderr logging gated by the WMRL_LOG environment variable
// (quiet | info | debug; default info)
bool log_enabled(int level);  // 1 = info, 2 = debug
void log_line(int level, const std::string& message);

}  // namespace wmrl
