#include "wmrl/grpo.hpp"

#include <cmath>
#include <limits>

namespace wmrl {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double component(const RewardVector& r, int c) {
  switch (c) {
    case kTranslation: return r.translation;
    case kRotation: return r.rotation;
    case kDepthInlier: return r.depth_inlier;
    default: return r.video;
  }
}

void set_component(RewardVector& r, int c, double value) {
  switch (c) {
    case kTranslation: r.translation = value; break;
    case kRotation: r.rotation = value; break;
    case kDepthInlier: r.depth_inlier = value; break;
    default: r.video = value; break;
  }
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd column_stats(const VectorXd& x) {
  MeanStd s;
  s.mean = x.mean();
  s.std = std::sqrt((x.array() - s.mean).square().mean());
  return s;
}

}  // namespace

Group sample_group(const DenoiserParams& params, const NoiseSchedule& schedule,
                   const LatentCodec& codec, const GroupTask& task,
                   const RewardContext& reward_ctx, const TrainerConfig& cfg,
                   std::uint64_t init_seed, std::uint64_t noise_seed_base) {
  if (cfg.eta <= 0.0) {
    throw ConfigError(
        "sample_group: eta must be positive (ratios need per-step noise)");
  }
  Group group;
  group.task = task;
  group.rollouts =
      sample_rollout_group(params, schedule, task.context, cfg.group_size,
                           cfg.eta, init_seed, noise_seed_base);

  const int g = cfg.group_size;
  group.raw_rewards.resize(g);
  // valid[i][c]: component c of member i was actually measured
  std::vector<std::array<bool, 4>> valid(g, {false, false, false, false});
  for (int i = 0; i < g; ++i) {
    RewardVector r;
    if (group.rollouts[i].failed) {
      r.failed = true;
    } else {
      std::vector<Frame> frames{task.x0};
      auto decoded = codec.decode_frames(group.rollouts[i].final_latent,
                                         params.config.shape);
      frames.insert(frames.end(), decoded.begin(), decoded.end());
      r = evaluate_all(frames, task.actions, reward_ctx);
      valid[i][kVideo] = true;  // video scorer never fails
      if (!r.failed) {
        valid[i][kTranslation] = valid[i][kRotation] = valid[i][kDepthInlier] =
            true;
      }
    }
    if (r.failed) ++group.failed_count;
    group.raw_rewards[i] = r;
  }
  group.rewards = group.raw_rewards;
  group.skipped = group.failed_count == g;
  if (group.skipped) return group;

  // failure policy: substitute the per-component minimum over measured values
  for (int c = 0; c < 4; ++c) {
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g; ++i) {
      if (valid[i][c]) lo = std::min(lo, component(group.rewards[i], c));
    }
    if (!std::isfinite(lo)) lo = 0.0;
    for (int i = 0; i < g; ++i) {
      if (!valid[i][c]) set_component(group.rewards[i], c, lo);
    }
  }
  return group;
}

void normalize_rewards(Group& group, double std_floor) {
  const int g = static_cast<int>(group.rewards.size());
  group.normalized = MatrixXd::Zero(g, 4);
  for (int c = 0; c < 4; ++c) {
    VectorXd col(g);
    for (int i = 0; i < g; ++i) col[i] = component(group.rewards[i], c);
    const MeanStd s = column_stats(col);
    if (s.std >= std_floor) {
      group.normalized.col(c) = (col.array() - s.mean) / s.std;
    }
  }
}

void compute_advantages(Group& group, const TrainerConfig& cfg) {
  const int g = static_cast<int>(group.rewards.size());
  VectorXd score = group.normalized.rowwise().sum();
  if (cfg.mean_objective_aggregation) score /= 4.0;
  const MeanStd s = column_stats(score);
  group.advantages = VectorXd::Zero(g);
  if (s.std >= cfg.std_floor) {
    group.advantages = (score.array() - s.mean) / s.std;
  }
}

SurrogateStats surrogate(const DenoiserParams& params,
                         const DenoiserParams& theta_ref,
                         const std::vector<Group>& groups,
                         const NoiseSchedule& schedule,
                         const TrainerConfig& cfg, DenoiserGrads* grads) {
  SurrogateStats stats;
  const double dt = schedule.dt();

  // total term count first, so per-column gradients carry the final 1/n
  long n_terms = 0;
  for (const Group& group : groups) {
    if (group.skipped) continue;
    for (const RolloutRecord& rec : group.rollouts) {
      const int retained =
          std::min(cfg.retained_steps(schedule.steps),
                   static_cast<int>(rec.steps.size()));
      n_terms += retained;
    }
  }
  if (n_terms == 0) return stats;
  stats.terms = n_terms;

  long clipped = 0;
  double j_sum = 0.0;
  double kl_sum = 0.0;
  for (const Group& group : groups) {
    if (group.skipped) continue;
    const int flat = params.config.shape.flat();
    std::vector<std::pair<int, int>> columns;  // (member, step)
    for (int i = 0; i < static_cast<int>(group.rollouts.size()); ++i) {
      const int retained =
          std::min(cfg.retained_steps(schedule.steps),
                   static_cast<int>(group.rollouts[i].steps.size()));
      for (int k = 0; k < retained; ++k) columns.emplace_back(i, k);
    }
    if (columns.empty()) continue;
    const int b = static_cast<int>(columns.size());

    MatrixXd x(flat, b);
    VectorXd t(b);
    for (int col = 0; col < b; ++col) {
      const RolloutStep& step =
          group.rollouts[columns[col].first].steps[columns[col].second];
      x.col(col) = step.input;
      t[col] = step.t;
    }
    const MatrixXd x0 =
        group.task.context.x0_latent * Eigen::RowVectorXd::Ones(b);
    const MatrixXd act =
        group.task.context.actions * Eigen::RowVectorXd::Ones(b);

    DenoiserActivations cache;
    const MatrixXd eps =
        denoiser_forward(params, x, t, x0, act, grads ? &cache : nullptr);
    const MatrixXd eps_ref = denoiser_forward(theta_ref, x, t, x0, act);

    MatrixXd grad_out;
    if (grads) grad_out = MatrixXd::Zero(flat, b);

    for (int col = 0; col < b; ++col) {
      const auto [member, step_index] = columns[col];
      const RolloutStep& step = group.rollouts[member].steps[step_index];
      const double advantage = group.advantages[member];
      const double sigma_t = schedule.marginal(step.t).sigma;
      const double eta = group.rollouts[member].eta;
      const double drift = 1.0 + 0.5 * step.beta * dt;
      const double eps_scale =
          -0.5 * step.beta * dt * (1.0 + eta * eta) / sigma_t;

      const VectorXd mean = drift * step.input + eps_scale * eps.col(col);
      const VectorXd mean_ref =
          drift * step.input + eps_scale * eps_ref.col(col);

      const double log_cur = step_log_density(step, mean);
      const double log_old = step_log_density(step, step.mean);
      const double rho = std::exp(log_cur - log_old);
      const double clamped = std::clamp(rho, 1.0 - cfg.clip, 1.0 + cfg.clip);
      const double unclipped = rho * advantage;
      const double clipped_term = clamped * advantage;
      j_sum += std::min(unclipped, clipped_term);
      if (rho < 1.0 - cfg.clip || rho > 1.0 + cfg.clip) ++clipped;

      const double var = step.std * step.std;
      kl_sum += (mean - mean_ref).squaredNorm() / (2.0 * var);

      if (grads) {
        // d(-J)/d(mean) through rho when the unclipped branch is active
        VectorXd dloss_dmean = VectorXd::Zero(flat);
        if (unclipped <= clipped_term) {
          const double dterm_drho = advantage;
          const VectorXd dlog_dmean = (step.sample - mean) / var;
          dloss_dmean.noalias() -=
              (dterm_drho * rho / n_terms) * dlog_dmean;
        }
        dloss_dmean.noalias() +=
            (cfg.kl_coef / n_terms / var) * (mean - mean_ref);
        grad_out.col(col) = eps_scale * dloss_dmean;
      }
    }
    if (grads) {
      denoiser_backward(params, cache, grad_out, *grads);
    }
  }

  stats.j = j_sum / n_terms;
  stats.kl = kl_sum / n_terms;
  stats.clip_fraction = static_cast<double>(clipped) / n_terms;
  stats.loss = -stats.j + cfg.kl_coef * stats.kl;
  return stats;
}

AdamW::AdamW(const DenoiserParams& like, const TrainerConfig& cfg)
    : m_(DenoiserParams::zeros_like(like)),
      v_(DenoiserParams::zeros_like(like)),
      lr_(cfg.learning_rate),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      weight_decay_(cfg.weight_decay),
      eps_(cfg.adam_eps) {}

bool AdamW::step(DenoiserParams& params, const DenoiserGrads& grads) {
  if (!grads.all_finite()) return false;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = beta1_ * m[i]->array() + (1.0 - beta1_) * g[i]->array();
    v[i]->array() =
        beta2_ * v[i]->array() + (1.0 - beta2_) * g[i]->array().square();
    p[i]->array() -=
        lr_ * ((m[i]->array() / bc1) / ((v[i]->array() / bc2).sqrt() + eps_) +
               weight_decay_ * p[i]->array());
  }
  return true;
}

std::array<double, 4> group_reward_stds(const Group& group) {
  std::array<double, 4> out{};
  const int g = static_cast<int>(group.rewards.size());
  for (int c = 0; c < 4; ++c) {
    VectorXd col(g);
    for (int i = 0; i < g; ++i) col[i] = component(group.rewards[i], c);
    out[c] = column_stats(col).std;
  }
  return out;
}

std::array<double, 4> group_reward_means(const Group& group) {
  std::array<double, 4> out{};
  const int g = static_cast<int>(group.rewards.size());
  for (int c = 0; c < 4; ++c) {
    double sum = 0.0;
    for (int i = 0; i < g; ++i) sum += component(group.rewards[i], c);
    out[c] = sum / g;
  }
  return out;
}

TrainStepMetrics train_step(DenoiserParams& params,
                            const DenoiserParams& theta_ref,
                            std::vector<Group>& groups,
                            const NoiseSchedule& schedule,
                            const TrainerConfig& cfg, AdamW& optimizer) {
  TrainStepMetrics metrics;
  int failed_rollouts = 0, total_rollouts = 0;
  for (Group& group : groups) {
    total_rollouts += static_cast<int>(group.rollouts.size());
    failed_rollouts += group.failed_count;
    if (group.skipped) continue;
    normalize_rewards(group, cfg.std_floor);
    compute_advantages(group, cfg);
    const auto mean = group_reward_means(group);
    const auto std = group_reward_stds(group);
    for (int c = 0; c < 4; ++c) {
      metrics.reward_mean[c] += mean[c];
      metrics.reward_std[c] += std[c];
    }
    ++metrics.groups_used;
  }
  if (total_rollouts > 0) {
    metrics.failure_rate =
        static_cast<double>(failed_rollouts) / total_rollouts;
  }
  if (metrics.groups_used == 0) return metrics;
  for (int c = 0; c < 4; ++c) {
    metrics.reward_mean[c] /= metrics.groups_used;
    metrics.reward_std[c] /= metrics.groups_used;
  }

  DenoiserGrads grads = DenoiserParams::zeros_like(params);
  metrics.stats = surrogate(params, theta_ref, groups, schedule, cfg, &grads);
  metrics.applied = optimizer.step(params, grads);
  return metrics;
}

void VarianceGuard::push(const std::array<double, 4>& stds,
                         double failure_rate) {
  stds_.push_back(stds);
  failures_.push_back(failure_rate);
  while (static_cast<int>(stds_.size()) > cfg_.window) {
    stds_.pop_front();
    failures_.pop_front();
  }
}

GuardState VarianceGuard::state() const {
  if (static_cast<int>(stds_.size()) < cfg_.window) return GuardState::proceed;
  bool all_degenerate = true;
  for (int c = 0; c < 4 && all_degenerate; ++c) {
    std::vector<double> vals;
    vals.reserve(stds_.size());
    for (const auto& s : stds_) vals.push_back(s[c]);
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    const double median = vals[vals.size() / 2];
    if (median >= cfg_.std_floor) all_degenerate = false;
  }
  if (!all_degenerate) return GuardState::proceed;
  double failure = 0.0;
  for (double f : failures_) failure += f;
  failure /= static_cast<double>(failures_.size());
  return failure > cfg_.failure_halt_rate ? GuardState::halt
                                          : GuardState::warn;
}

}  // namespace wmrl
