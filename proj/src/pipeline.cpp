#include "wmrl/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

namespace wmrl {

namespace {

using Eigen::VectorXd;
using nlohmann::json;

void append_line(const std::filesystem::path& file, const std::string& line) {
  std::ofstream out(file, std::ios::app);
  if (!out) throw IoError("cannot append to " + file.string());
  out << line << '\n';
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, file);
}

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open: " + file.string());
  return {std::istreambuf_iterator<char>(in),
          std::istreambuf_iterator<char>()};
}

std::string csv_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

}  // namespace

bool log_enabled(int level) {
  static const int configured = [] {
    const char* env = std::getenv("WMRL_LOG");
    if (!env) return 1;
    const std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
  }();
  return level <= configured;
}

void log_line(int level, const std::string& message) {
  if (log_enabled(level)) std::cerr << message << std::endl;
}

Eigen::VectorXd flatten_actions(const std::vector<Action6DoF>& actions) {
  const int horizon = static_cast<int>(actions.size()) - 1;
  VectorXd out(6 * horizon);
  for (int t = 1; t <= horizon; ++t) {
    const Action6DoF& a = actions[t];
    out.segment<6>(6 * (t - 1)) << a.x, a.y, a.z, a.roll, a.pitch, a.yaw;
  }
  return out;
}

EncodedContext encode_context(const Sequence& seq, const LatentCodec& codec,
                              bool mirrored) {
  EncodedContext out;
  out.id = seq.id;
  out.x0 = seq.frames[0];
  out.actions = seq.actions;
  if (mirrored) {
    for (Action6DoF& a : out.actions) a = mirror_action(a);
  }
  out.context.x0_latent = codec.encode_frame(seq.frames[0]);
  out.context.actions = flatten_actions(out.actions);
  return out;
}

SftItem make_sft_item(const Sequence& seq, const LatentCodec& codec) {
  SftItem item;
  item.target = codec.encode_frames(seq.frames, 1, seq.horizon());
  item.x0_latent = codec.encode_frame(seq.frames[0]);
  item.actions = flatten_actions(seq.actions);
  return item;
}

DenoiserConfig make_denoiser_config(const ModelConfig& model, int horizon,
                                    int height, int width) {
  DenoiserConfig cfg;
  cfg.width = model.width;
  cfg.blocks = model.blocks;
  cfg.time_features = model.time_features;
  cfg.action_embed = model.action_embed;
  cfg.action_dim = 6 * horizon;
  cfg.shape = LatentShape{horizon, height, width, 2};
  return cfg;
}

void run_gen_data(const ExperimentConfig& cfg,
                  const std::filesystem::path& out_dir) {
  DatasetConfig dcfg = cfg.dataset;
  dcfg.motion_seed = derive_seed(cfg.run_seed, "dataset-motion");
  const Dataset dataset = build_dataset(dcfg);
  write_dataset(dataset, out_dir);
  log_line(1, "gen-data: wrote " + out_dir.string());
}

void run_train_sft(const ExperimentConfig& cfg,
                   const std::filesystem::path& data_dir,
                   const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const Dataset dataset = load_dataset(data_dir);
  const auto it = dataset.splits.find("seen");
  if (it == dataset.splits.end() || it->second.empty()) {
    throw ConfigError("train-sft: dataset has no seen split");
  }
  const std::vector<Sequence>& train = it->second;

  const LatentCodec codec{cfg.model.depth_midpoint,
                          dataset.config.render.near_clip,
                          dataset.config.render.far_clip};
  const DenoiserConfig dconfig = make_denoiser_config(
      cfg.model, dataset.config.horizon, dataset.config.camera.height,
      dataset.config.camera.width);

  std::vector<SftItem> items;
  items.reserve(train.size());
  for (const Sequence& seq : train) items.push_back(make_sft_item(seq, codec));

  TrainerConfig opt_cfg;
  opt_cfg.learning_rate = cfg.sft.learning_rate;
  opt_cfg.weight_decay = cfg.sft.weight_decay;
  opt_cfg.beta1 = cfg.sft.beta1;
  opt_cfg.beta2 = cfg.sft.beta2;
  opt_cfg.adam_eps = cfg.sft.adam_eps;

  DenoiserParams params =
      DenoiserParams::init(dconfig, derive_seed(cfg.run_seed, "init"));
  AdamW optimizer(params, opt_cfg);
  std::int64_t start_step = 0;

  const auto state_file = out_dir / "train_state.bin";
  if (std::filesystem::exists(state_file)) {
    TrainState state = load_train_state(state_file, params);
    params = std::move(state.params);
    optimizer.moment1() = std::move(state.m);
    optimizer.moment2() = std::move(state.v);
    optimizer.count() = state.adam_step;
    start_step = state.train_step;
    log_line(1, "train-sft: resumed at step " + std::to_string(start_step));
  }

  const auto log_file = out_dir / "sft_log.jsonl";
  log_line(1, "train-sft: " + std::to_string(params.parameter_count()) +
                  " parameters, " + std::to_string(train.size()) +
                  " sequences");
  for (std::int64_t step = start_step + 1; step <= cfg.sft.steps; ++step) {
    RandomStream rng(derive_seed(cfg.run_seed, "sft-step", step));
    std::vector<const SftItem*> batch;
    batch.reserve(cfg.sft.batch_size);
    for (int i = 0; i < cfg.sft.batch_size; ++i) {
      batch.push_back(&items[rng.integer(items.size())]);
    }
    DenoiserGrads grads = DenoiserParams::zeros_like(params);
    const double loss =
        dsm_loss(params, cfg.model.schedule, batch, cfg.sft.dsm, rng, &grads);
    if (!std::isfinite(loss)) {
      throw NumericError("train-sft: non-finite loss at step " +
                         std::to_string(step));
    }
    if (!optimizer.step(params, grads)) {
      throw NumericError("train-sft: non-finite gradient at step " +
                         std::to_string(step));
    }
    if (step % cfg.sft.log_every == 0) {
      append_line(log_file, json{{"step", step}, {"loss", loss}}.dump());
    }
    if (log_enabled(2) && step % 100 == 0) {
      log_line(2, "sft step " + std::to_string(step) + " loss " +
                      std::to_string(loss));
    }
    if (step % cfg.sft.checkpoint_every == 0 || step == cfg.sft.steps) {
      char name[40];
      std::snprintf(name, sizeof(name), "sft_step_%05lld.ckpt",
                    static_cast<long long>(step));
      save_checkpoint(out_dir / name, params, cfg.model.schedule, step);
      save_train_state(state_file, params, optimizer.moment1(),
                       optimizer.moment2(), optimizer.count(), step);
    }
  }
  save_checkpoint(out_dir / "sft_final.ckpt", params, cfg.model.schedule,
                  cfg.sft.steps);
  log_line(1, "train-sft: done");
}

namespace {

struct GrpoEnvironment {
  Dataset dataset;
  LatentCodec codec;
  Evaluator3D evaluator;
  VideoEvaluator video;
  RewardContext reward_ctx;
  const std::vector<Sequence>* train = nullptr;
};

GrpoEnvironment make_environment(const ExperimentConfig& cfg,
                                 const std::filesystem::path& data_dir) {
  GrpoEnvironment env;
  env.dataset = load_dataset(data_dir);
  const auto it = env.dataset.splits.find("seen");
  if (it == env.dataset.splits.end() || it->second.empty()) {
    throw ConfigError("dataset has no seen split");
  }
  env.train = &it->second;
  env.codec = LatentCodec{cfg.model.depth_midpoint,
                          env.dataset.config.render.near_clip,
                          env.dataset.config.render.far_clip};
  env.reward_ctx.evaluator3d = &env.evaluator;
  env.reward_ctx.video = &env.video;
  env.reward_ctx.camera = env.dataset.config.camera;
  env.reward_ctx.config = cfg.rewards;
  return env;
}

GroupTask make_task(const Sequence& seq, const LatentCodec& codec,
                    bool mirrored) {
  const EncodedContext enc = encode_context(seq, codec, mirrored);
  GroupTask task;
  task.x0 = enc.x0;
  task.actions = enc.actions;
  task.context = enc.context;
  task.context_id = enc.id;
  task.mirrored = mirrored;
  return task;
}

json stds_json(const std::array<double, 4>& a) {
  return {{"translation", a[0]},
          {"rotation", a[1]},
          {"dtri", a[2]},
          {"video", a[3]}};
}

const char* guard_name(GuardState s) {
  switch (s) {
    case GuardState::proceed: return "proceed";
    case GuardState::warn: return "warn";
    default: return "halt";
  }
}

}  // namespace

void run_train_grpo(const ExperimentConfig& cfg,
                    const std::filesystem::path& data_dir,
                    const std::filesystem::path& baseline_checkpoint,
                    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  GrpoEnvironment env = make_environment(cfg, data_dir);
  const Checkpoint baseline = load_checkpoint(baseline_checkpoint);
  const NoiseSchedule& schedule = baseline.schedule;
  DenoiserParams params = baseline.params;
  const DenoiserParams theta_ref = baseline.params;  // KL anchor, frozen
  const TrainerConfig& trainer = cfg.grpo.trainer;
  const int n_train = static_cast<int>(env.train->size());

  // variance gate: the baseline must produce distinguishable rollouts
  {
    RandomStream gate_rng(derive_seed(cfg.run_seed, "grpo-gate"));
    int healthy = 0;
    std::vector<double> probe_stds;
    for (int g = 0; g < cfg.grpo.gate_contexts; ++g) {
      const int idx = static_cast<int>(gate_rng.integer(n_train));
      const bool mirrored =
          gate_rng.uniform() < cfg.grpo.counterfactual_fraction;
      const GroupTask task =
          make_task((*env.train)[idx], env.codec, mirrored);
      const Group group = sample_group(
          params, schedule, env.codec, task, env.reward_ctx, trainer,
          derive_seed(cfg.run_seed, "gate-init", g),
          derive_seed(cfg.run_seed, "gate-noise", g));
      if (group.skipped) {
        probe_stds.push_back(0.0);
        continue;
      }
      const double std_trans = group_reward_stds(group)[kTranslation];
      probe_stds.push_back(std_trans);
      if (std_trans > cfg.grpo.guard.std_floor) ++healthy;
    }
    const double fraction =
        static_cast<double>(healthy) / cfg.grpo.gate_contexts;
    json gate = {{"healthy_fraction", fraction},
                 {"probe_translation_stds", probe_stds}};
    write_text(out_dir / "variance_gate.json", gate.dump(2) + "\n");
    if (fraction < cfg.grpo.gate_min_variance_fraction) {
      throw GateError("train-grpo: variance gate failed, " + gate.dump());
    }
  }

  AdamW optimizer(params, trainer);
  VarianceGuard guard(cfg.grpo.guard);
  const auto log_file = out_dir / "train_log.jsonl";
  const auto reward_file = out_dir / "rewards.jsonl";

  for (int iter = 1; iter <= cfg.grpo.iterations; ++iter) {
    RandomStream ctx_rng(derive_seed(cfg.run_seed, "grpo-ctx", iter));
    std::vector<Group> groups;
    groups.reserve(cfg.grpo.contexts_per_iteration);
    for (int g = 0; g < cfg.grpo.contexts_per_iteration; ++g) {
      const int idx = static_cast<int>(ctx_rng.integer(n_train));
      const bool mirrored =
          ctx_rng.uniform() < cfg.grpo.counterfactual_fraction;
      const GroupTask task = make_task((*env.train)[idx], env.codec, mirrored);
      groups.push_back(sample_group(
          params, schedule, env.codec, task, env.reward_ctx, trainer,
          derive_seed(cfg.run_seed, "grpo-init", iter, g),
          derive_seed(cfg.run_seed, "grpo-noise", iter, g)));
      const Group& group = groups.back();
      for (int i = 0; i < static_cast<int>(group.raw_rewards.size()); ++i) {
        const RewardVector& r = group.raw_rewards[i];
        append_line(reward_file,
                    json{{"iteration", iter},
                         {"context", group.task.context_id},
                         {"mirrored", group.task.mirrored},
                         {"rollout", i},
                         {"translation", r.translation},
                         {"rotation", r.rotation},
                         {"dtri", r.depth_inlier},
                         {"video", r.video},
                         {"failed", r.failed}}
                        .dump());
      }
    }

    TrainStepMetrics metrics =
        train_step(params, theta_ref, groups, schedule, trainer, optimizer);
    for (const Group& group : groups) {
      if (group.skipped) continue;
      guard.push(group_reward_stds(group),
                 static_cast<double>(group.failed_count) /
                     trainer.group_size);
    }
    const GuardState state = guard.state();

    append_line(
        log_file,
        json{{"iteration", iter},
             {"j", metrics.stats.j},
             {"kl", metrics.stats.kl},
             {"clip_fraction", metrics.stats.clip_fraction},
             {"loss", metrics.stats.loss},
             {"reward_mean", stds_json(metrics.reward_mean)},
             {"reward_std", stds_json(metrics.reward_std)},
             {"failure_rate", metrics.failure_rate},
             {"groups_used", metrics.groups_used},
             {"applied", metrics.applied},
             {"guard", guard_name(state)}}
            .dump());
    if (log_enabled(2) && iter % 10 == 0) {
      log_line(2, "grpo iter " + std::to_string(iter) + " J " +
                      std::to_string(metrics.stats.j));
    }

    if (state == GuardState::halt) {
      save_checkpoint(out_dir / "grpo_final.ckpt", params, schedule, iter);
      append_line(log_file, json{{"halted_at", iter}}.dump());
      throw GateError("train-grpo: variance guard halted at iteration " +
                      std::to_string(iter));
    }
    for (int mark : cfg.grpo.checkpoint_iterations) {
      if (iter == mark) {
        char name[40];
        std::snprintf(name, sizeof(name), "grpo_iter_%04d.ckpt", iter);
        save_checkpoint(out_dir / name, params, schedule, iter);
      }
    }
  }
  save_checkpoint(out_dir / "grpo_final.ckpt", params, schedule,
                  cfg.grpo.iterations);
  log_line(1, "train-grpo: done");
}

namespace {

struct Accumulator {
  double sum = 0.0;
  long n = 0;
  void add(double x) {
    sum += x;
    ++n;
  }
  double mean() const { return n > 0 ? sum / n : 0.0; }
};

struct RolloutMetrics {
  double t_err, r_err, video, dtri;
  bool failed;
};

RolloutMetrics metrics_from_reward(const RewardVector& r) {
  return {-r.translation, -r.rotation, r.video, r.depth_inlier, r.failed};
}

}  // namespace

void run_eval(const ExperimentConfig& cfg,
              const std::filesystem::path& checkpoint,
              const std::filesystem::path& data_dir,
              const std::vector<std::string>& regimes,
              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  GrpoEnvironment env = make_environment(cfg, data_dir);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const int repeats = cfg.eval.rollouts_per_context;

  json report = {
      {"label", checkpoint.stem().string()},
      {"checkpoint_step", ckpt.step},
      {"horizon", env.dataset.config.horizon},
      {"height", env.dataset.config.camera.height},
      {"width", env.dataset.config.camera.width},
      {"sequence_count", cfg.eval.sequence_count},
      {"rollouts_per_context", repeats},
      {"regimes", json::object()},
  };

  std::string contexts_csv =
      "regime,context,rollout,T,R,V,DTRI,failed\n";
  for (const std::string& regime : regimes) {
    const auto it = env.dataset.splits.find(regime);
    if (it == env.dataset.splits.end()) {
      throw ConfigError("eval: dataset has no split '" + regime + "'");
    }
    const auto& split = it->second;
    const int n_ctx =
        std::min(cfg.eval.sequence_count, static_cast<int>(split.size()));

    Accumulator t_mean, r_mean, v_mean, d_mean, t_std, r_std;
    Accumulator cal_t, cal_r, cal_v, cal_d;
    long failed_rollouts = 0;
    for (int c = 0; c < n_ctx; ++c) {
      const Sequence& seq = split[c];
      const EncodedContext enc = encode_context(seq, env.codec, false);
      std::vector<std::uint64_t> init_seeds(repeats), noise_seeds(repeats);
      for (int rep = 0; rep < repeats; ++rep) {
        init_seeds[rep] =
            derive_seed(cfg.run_seed, "eval-init-" + regime, seq.id, rep);
        noise_seeds[rep] =
            derive_seed(cfg.run_seed, "eval-noise-" + regime, seq.id, rep);
      }
      const auto rollouts =
          sample_rollouts(ckpt.params, ckpt.schedule, enc.context,
                          cfg.eval.eta, init_seeds, noise_seeds, false);

      std::vector<RolloutMetrics> ok;
      for (int rep = 0; rep < repeats; ++rep) {
        RewardVector reward;
        if (rollouts[rep].failed) {
          reward.failed = true;
        } else {
          std::vector<Frame> frames{enc.x0};
          auto decoded = env.codec.decode_frames(rollouts[rep].final_latent,
                                                 ckpt.params.config.shape);
          frames.insert(frames.end(), decoded.begin(), decoded.end());
          reward = evaluate_all(frames, enc.actions, env.reward_ctx);
        }
        const RolloutMetrics m = metrics_from_reward(reward);
        contexts_csv += regime + "," + std::to_string(seq.id) + "," +
                        std::to_string(rep) + "," + csv_number(m.t_err) + "," +
                        csv_number(m.r_err) + "," + csv_number(m.video) + "," +
                        csv_number(m.dtri) + "," +
                        (m.failed ? "1" : "0") + "\n";
        if (m.failed) {
          ++failed_rollouts;
        } else {
          ok.push_back(m);
        }
      }
      if (!ok.empty()) {
        double tm = 0, rm = 0, vm = 0, dm = 0;
        for (const auto& m : ok) {
          tm += m.t_err;
          rm += m.r_err;
          vm += m.video;
          dm += m.dtri;
        }
        tm /= ok.size();
        rm /= ok.size();
        vm /= ok.size();
        dm /= ok.size();
        t_mean.add(tm);
        r_mean.add(rm);
        v_mean.add(vm);
        d_mean.add(dm);
        if (ok.size() >= 2) {
          double tv = 0, rv = 0;
          for (const auto& m : ok) {
            tv += (m.t_err - tm) * (m.t_err - tm);
            rv += (m.r_err - rm) * (m.r_err - rm);
          }
          t_std.add(std::sqrt(tv / ok.size()));
          r_std.add(std::sqrt(rv / ok.size()));
        }
      }

      // calibration row: ground-truth renders through the same pipeline
      {
        const RewardVector reward =
            evaluate_all(seq.frames, enc.actions, env.reward_ctx);
        const RolloutMetrics m = metrics_from_reward(reward);
        if (!m.failed) {
          cal_t.add(m.t_err);
          cal_r.add(m.r_err);
          cal_v.add(m.video);
          cal_d.add(m.dtri);
        }
      }
    }
    const double failure_rate =
        n_ctx > 0 ? static_cast<double>(failed_rollouts) / (n_ctx * repeats)
                  : 0.0;
    report["regimes"][regime] = {
        {"contexts", n_ctx},
        {"translation_error", t_mean.mean()},
        {"rotation_error", r_mean.mean()},
        {"video_quality", v_mean.mean()},
        {"dtri", d_mean.mean()},
        {"translation_std", t_std.mean()},
        {"rotation_std", r_std.mean()},
        {"failure_rate", failure_rate},
        {"unreliable", failure_rate > 0.5},
        {"calibration",
         {{"translation_error", cal_t.mean()},
          {"rotation_error", cal_r.mean()},
          {"video_quality", cal_v.mean()},
          {"dtri", cal_d.mean()}}},
    };
    log_line(1, "eval " + regime + ": T " + csv_number(t_mean.mean()) +
                    " R " + csv_number(r_mean.mean()) + " DTRI " +
                    csv_number(d_mean.mean()));
  }

  write_text(out_dir / "eval_report.json", report.dump(2) + "\n");
  write_text(out_dir / "contexts.csv", contexts_csv);

  std::string metrics_csv = "regime,T,R,V,DTRI,failure_rate\n";
  std::string reliability_csv = "regime,T_mean,T_std,R_mean,R_std\n";
  for (const std::string& regime : regimes) {
    const json& r = report["regimes"][regime];
    metrics_csv += regime + "," +
                   csv_number(r["translation_error"].get<double>()) + "," +
                   csv_number(r["rotation_error"].get<double>()) + "," +
                   csv_number(r["video_quality"].get<double>()) + "," +
                   csv_number(r["dtri"].get<double>()) + "," +
                   csv_number(r["failure_rate"].get<double>()) + "\n";
    reliability_csv += regime + "," +
                       csv_number(r["translation_error"].get<double>()) + "," +
                       csv_number(r["translation_std"].get<double>()) + "," +
                       csv_number(r["rotation_error"].get<double>()) + "," +
                       csv_number(r["rotation_std"].get<double>()) + "\n";
  }
  write_text(out_dir / "metrics.csv", metrics_csv);
  write_text(out_dir / "reliability.csv", reliability_csv);
}

void run_report(const std::vector<std::filesystem::path>& reports,
                const std::filesystem::path& out_dir) {
  if (reports.empty()) throw ConfigError("report: no runs given");
  std::filesystem::create_directories(out_dir);
  std::vector<json> loaded;
  for (const auto& path : reports) {
    loaded.push_back(json::parse(read_text(path)));
  }
  // all runs must describe the same experiment shape
  const std::vector<std::string> schema_fields{
      "horizon", "height", "width", "sequence_count", "rollouts_per_context"};
  std::vector<std::string> offending;
  for (const std::string& field : schema_fields) {
    for (size_t i = 1; i < loaded.size(); ++i) {
      if (loaded[i].at(field) != loaded[0].at(field)) {
        offending.push_back(field);
        break;
      }
    }
  }
  for (size_t i = 1; i < loaded.size(); ++i) {
    if (loaded[i].at("regimes").size() != loaded[0].at("regimes").size()) {
      offending.push_back("regimes");
      break;
    }
  }
  if (!offending.empty()) {
    std::string msg = "report: schema mismatch across runs in fields:";
    for (const auto& f : offending) msg += " " + f;
    throw ConfigError(msg);
  }

  std::vector<std::string> regimes;
  for (const auto& [name, value] : loaded[0].at("regimes").items()) {
    regimes.push_back(name);
  }

  std::string table1 = "method";
  for (const auto& regime : regimes) {
    table1 += "," + regime + "_T," + regime + "_R," + regime + "_V," + regime +
              "_DTRI";
  }
  table1 += "\n";
  std::string table2 = "method";
  for (const auto& regime : regimes) {
    table2 += "," + regime + "_T_mean," + regime + "_T_std," + regime +
              "_R_mean," + regime + "_R_std";
  }
  table2 += "\n";
  for (const json& run : loaded) {
    const std::string label = run.at("label").get<std::string>();
    table1 += label;
    table2 += label;
    for (const auto& regime : regimes) {
      const json& r = run.at("regimes").at(regime);
      table1 += "," + csv_number(r.at("translation_error").get<double>()) +
                "," + csv_number(r.at("rotation_error").get<double>()) + "," +
                csv_number(r.at("video_quality").get<double>()) + "," +
                csv_number(r.at("dtri").get<double>());
      table2 += "," + csv_number(r.at("translation_error").get<double>()) +
                "," + csv_number(r.at("translation_std").get<double>()) + "," +
                csv_number(r.at("rotation_error").get<double>()) + "," +
                csv_number(r.at("rotation_std").get<double>());
    }
    table1 += "\n";
    table2 += "\n";
  }
  write_text(out_dir / "table1.csv", table1);
  write_text(out_dir / "table2.csv", table2);
}

}  // namespace wmrl
