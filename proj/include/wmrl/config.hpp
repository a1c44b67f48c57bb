#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wmrl/dataset.hpp"
#include "wmrl/diffusion.hpp"
#include "wmrl/grpo.hpp"

namespace wmrl {

struct SftConfig {
  int steps = 2000;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  DsmConfig dsm;
  int checkpoint_every = 500;
  int log_every = 1;
};

struct GrpoRunConfig {
  TrainerConfig trainer;
  int iterations = 200;
  int contexts_per_iteration = 2;
  double counterfactual_fraction = 0.5;
  std::vector<int> checkpoint_iterations{100, 150, 200};
  GuardConfig guard;
  int gate_contexts = 8;
  double gate_min_variance_fraction = 0.5;
};

struct EvalConfig {
  std::vector<std::string> regimes{"seen", "counterfactual", "unseen"};
  int sequence_count = 64;
  int rollouts_per_context = 8;
  double eta = 1.0;
};

struct ModelConfig {
  int width = 256;
  int blocks = 2;
  int time_features = 16;
  int action_embed = 32;
  NoiseSchedule schedule;
  double depth_midpoint = 5.0;
};

struct ExperimentConfig {
  std::uint64_t run_seed = 1;
  DatasetConfig dataset;
  ModelConfig model;
  SftConfig sft;
  GrpoRunConfig grpo;
  EvalConfig eval;
  RewardConfig rewards;
};

// Parses the documented JSON config. Unknown keys anywhere in the tree are
// rejected with a ConfigError naming the offending path.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& file);

}  // namespace wmrl
