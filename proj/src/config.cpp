#include "wmrl/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace wmrl {

namespace {

using nlohmann::json;

void expect_keys(const json& obj, const std::string& path,
                 const std::set<std::string>& known) {
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError("unknown config key: " + path + key);
    }
  }
}

template <typename T>
void get_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

MotionParams parse_motion(const json& obj, const std::string& path,
                          MotionParams defaults) {
  expect_keys(obj, path,
              {"speed_min", "speed_max", "yaw_rate_min", "yaw_rate_max",
               "pitch_amplitude", "roll_amplitude"});
  MotionParams m = defaults;
  get_if(obj, "speed_min", m.speed_min);
  get_if(obj, "speed_max", m.speed_max);
  get_if(obj, "yaw_rate_min", m.yaw_rate_min);
  get_if(obj, "yaw_rate_max", m.yaw_rate_max);
  get_if(obj, "pitch_amplitude", m.pitch_amplitude);
  get_if(obj, "roll_amplitude", m.roll_amplitude);
  return m;
}

void parse_dataset(const json& obj, DatasetConfig& d) {
  expect_keys(obj, "dataset.",
              {"seen_count", "counterfactual_count", "unseen_count", "horizon",
               "width", "height", "fx", "fy", "cx", "cy", "near_clip",
               "far_clip", "seen_seed_base", "unseen_seed_base", "box_count",
               "seen_motion", "unseen_motion"});
  get_if(obj, "seen_count", d.seen_count);
  get_if(obj, "counterfactual_count", d.counterfactual_count);
  get_if(obj, "unseen_count", d.unseen_count);
  get_if(obj, "horizon", d.horizon);
  get_if(obj, "width", d.camera.width);
  get_if(obj, "height", d.camera.height);
  get_if(obj, "fx", d.camera.fx);
  get_if(obj, "fy", d.camera.fy);
  get_if(obj, "cx", d.camera.cx);
  get_if(obj, "cy", d.camera.cy);
  get_if(obj, "near_clip", d.render.near_clip);
  get_if(obj, "far_clip", d.render.far_clip);
  get_if(obj, "seen_seed_base", d.seen_seed_base);
  get_if(obj, "unseen_seed_base", d.unseen_seed_base);
  get_if(obj, "box_count", d.scene_params.box_count);
  if (obj.contains("seen_motion")) {
    d.seen_motion =
        parse_motion(obj.at("seen_motion"), "dataset.seen_motion.", d.seen_motion);
  }
  if (obj.contains("unseen_motion")) {
    d.unseen_motion = parse_motion(obj.at("unseen_motion"),
                                   "dataset.unseen_motion.", d.unseen_motion);
  }
  if (d.camera.width <= 0 || d.camera.height <= 0 || d.horizon < 1) {
    throw ConfigError("dataset: non-positive resolution or horizon");
  }
  if (d.camera.fx <= 0 || d.camera.fy <= 0 || d.camera.cx < 0 ||
      d.camera.cx >= d.camera.width || d.camera.cy < 0 ||
      d.camera.cy >= d.camera.height) {
    throw ConfigError("dataset: invalid camera intrinsics");
  }
}

void parse_model(const json& obj, ModelConfig& m) {
  expect_keys(obj, "model.",
              {"width", "blocks", "time_features", "action_embed",
               "diffusion_steps", "beta_min", "beta_max", "t_min",
               "depth_midpoint"});
  get_if(obj, "width", m.width);
  get_if(obj, "blocks", m.blocks);
  get_if(obj, "time_features", m.time_features);
  get_if(obj, "action_embed", m.action_embed);
  get_if(obj, "diffusion_steps", m.schedule.steps);
  get_if(obj, "beta_min", m.schedule.beta_min);
  get_if(obj, "beta_max", m.schedule.beta_max);
  get_if(obj, "t_min", m.schedule.t_min);
  get_if(obj, "depth_midpoint", m.depth_midpoint);
  if (m.schedule.steps < 2) throw ConfigError("model: diffusion_steps < 2");
  if (m.schedule.beta_min <= 0 || m.schedule.beta_max < m.schedule.beta_min) {
    throw ConfigError("model: invalid beta range");
  }
}

void parse_sft(const json& obj, SftConfig& s) {
  expect_keys(obj, "sft.",
              {"steps", "batch_size", "learning_rate", "weight_decay", "beta1",
               "beta2", "adam_eps", "loss_scale", "sigma_data", "p_mean",
               "p_std", "weight_sigma_cap", "checkpoint_every", "log_every"});
  get_if(obj, "steps", s.steps);
  get_if(obj, "batch_size", s.batch_size);
  get_if(obj, "learning_rate", s.learning_rate);
  get_if(obj, "weight_decay", s.weight_decay);
  get_if(obj, "beta1", s.beta1);
  get_if(obj, "beta2", s.beta2);
  get_if(obj, "adam_eps", s.adam_eps);
  get_if(obj, "loss_scale", s.dsm.loss_scale);
  get_if(obj, "sigma_data", s.dsm.sigma_data);
  get_if(obj, "p_mean", s.dsm.p_mean);
  get_if(obj, "p_std", s.dsm.p_std);
  get_if(obj, "weight_sigma_cap", s.dsm.weight_sigma_cap);
  get_if(obj, "checkpoint_every", s.checkpoint_every);
  get_if(obj, "log_every", s.log_every);
  if (s.batch_size < 1) throw ConfigError("sft: batch_size < 1");
}

void parse_grpo(const json& obj, GrpoRunConfig& g) {
  expect_keys(
      obj, "grpo.",
      {"iterations", "group_size", "contexts_per_iteration", "clip", "kl_coef",
       "backprop_fraction", "learning_rate", "weight_decay", "beta1", "beta2",
       "adam_eps", "std_floor", "eta", "mean_objective_aggregation",
       "counterfactual_fraction", "checkpoint_iterations", "guard_window",
       "guard_std_floor", "guard_failure_rate", "gate_contexts",
       "gate_min_variance_fraction"});
  get_if(obj, "iterations", g.iterations);
  get_if(obj, "group_size", g.trainer.group_size);
  get_if(obj, "contexts_per_iteration", g.contexts_per_iteration);
  get_if(obj, "clip", g.trainer.clip);
  get_if(obj, "kl_coef", g.trainer.kl_coef);
  get_if(obj, "backprop_fraction", g.trainer.backprop_fraction);
  get_if(obj, "learning_rate", g.trainer.learning_rate);
  get_if(obj, "weight_decay", g.trainer.weight_decay);
  get_if(obj, "beta1", g.trainer.beta1);
  get_if(obj, "beta2", g.trainer.beta2);
  get_if(obj, "adam_eps", g.trainer.adam_eps);
  get_if(obj, "std_floor", g.trainer.std_floor);
  get_if(obj, "eta", g.trainer.eta);
  get_if(obj, "mean_objective_aggregation",
         g.trainer.mean_objective_aggregation);
  get_if(obj, "counterfactual_fraction", g.counterfactual_fraction);
  get_if(obj, "checkpoint_iterations", g.checkpoint_iterations);
  get_if(obj, "guard_window", g.guard.window);
  get_if(obj, "guard_std_floor", g.guard.std_floor);
  get_if(obj, "guard_failure_rate", g.guard.failure_halt_rate);
  get_if(obj, "gate_contexts", g.gate_contexts);
  get_if(obj, "gate_min_variance_fraction", g.gate_min_variance_fraction);
  if (g.trainer.clip <= 0.0 || g.trainer.clip >= 1.0) {
    throw ConfigError("grpo: clip must be in (0,1)");
  }
  if (g.trainer.backprop_fraction <= 0.0 ||
      g.trainer.backprop_fraction > 1.0) {
    throw ConfigError("grpo: backprop_fraction must be in (0,1]");
  }
  if (g.trainer.group_size < 2) throw ConfigError("grpo: group_size < 2");
}

void parse_eval(const json& obj, EvalConfig& e) {
  expect_keys(obj, "eval.",
              {"regimes", "sequence_count", "rollouts_per_context", "eta"});
  get_if(obj, "regimes", e.regimes);
  get_if(obj, "sequence_count", e.sequence_count);
  get_if(obj, "rollouts_per_context", e.rollouts_per_context);
  get_if(obj, "eta", e.eta);
  for (const std::string& r : e.regimes) {
    if (r != "seen" && r != "counterfactual" && r != "unseen") {
      throw ConfigError("eval: unknown regime '" + r + "'");
    }
  }
}

void parse_rewards(const json& obj, RewardConfig& r) {
  expect_keys(obj, "rewards.", {"gamma", "alpha", "beta", "scale_alignment"});
  get_if(obj, "gamma", r.gamma);
  get_if(obj, "alpha", r.alpha);
  get_if(obj, "beta", r.beta);
  get_if(obj, "scale_alignment", r.scale_alignment);
  if (r.gamma <= 0.0) throw ConfigError("rewards: gamma must be positive");
  if (r.alpha < 0.0 || r.beta < 0.0 ||
      std::abs(r.alpha + r.beta - 1.0) > 1e-12) {
    throw ConfigError("rewards: alpha/beta must be >= 0 and sum to 1");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& err) {
    throw ConfigError(std::string("config parse error: ") + err.what());
  }
  expect_keys(root, "",
              {"run_seed", "dataset", "model", "sft", "grpo", "eval",
               "rewards"});
  ExperimentConfig cfg;
  get_if(root, "run_seed", cfg.run_seed);
  if (root.contains("dataset")) parse_dataset(root.at("dataset"), cfg.dataset);
  if (root.contains("model")) parse_model(root.at("model"), cfg.model);
  if (root.contains("sft")) parse_sft(root.at("sft"), cfg.sft);
  if (root.contains("grpo")) parse_grpo(root.at("grpo"), cfg.grpo);
  if (root.contains("eval")) parse_eval(root.at("eval"), cfg.eval);
  if (root.contains("rewards")) parse_rewards(root.at("rewards"), cfg.rewards);
  cfg.dataset.motion_seed = derive_seed(cfg.run_seed, "dataset-motion");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config: " + file.string());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

}  // namespace wmrl
