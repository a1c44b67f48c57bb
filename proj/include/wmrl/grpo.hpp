#pragma once

#include <array>
#include <deque>

#include "wmrl/diffusion.hpp"
#include "wmrl/rewards.hpp"

namespace wmrl {

struct TrainerConfig {
  int group_size = 8;
  double clip = 0.2;
  double kl_coef = 0.01;
  double backprop_fraction = 0.6;  // earliest (noisiest) steps first
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.1;
  double adam_eps = 1e-8;
  double std_floor = 1e-6;
  double eta = 1.0;  // rollout stochasticity; ratios require eta > 0
  bool mean_objective_aggregation = false;  // sum of z-scores by default

  int retained_steps(int sampler_steps) const {
    return static_cast<int>(
        std::ceil(backprop_fraction * static_cast<double>(sampler_steps)));
  }
};

// One conditioning context: the observed frame, the commanded action
// sequence and their latent-space encodings.
struct GroupTask {
  Frame x0;
  std::vector<Action6DoF> actions;  // a_0..a_T, a_0 = identity
  DiffusionContext context;
  int context_id = 0;
  bool mirrored = false;
};

struct Group {
  GroupTask task;
  std::vector<RolloutRecord> rollouts;
  std::vector<RewardVector> raw_rewards;  // as evaluated
  std::vector<RewardVector> rewards;      // after failure substitution
  Eigen::MatrixXd normalized;             // group_size x 4
  Eigen::VectorXd advantages;
  int failed_count = 0;
  bool skipped = false;  // every rollout failed
};

// Objective column order used throughout the module.
enum RewardComponent { kTranslation = 0, kRotation, kDepthInlier, kVideo };

// Samples G rollouts with shared initial noise, decodes and scores them, and
// applies the failure policy (failed rollouts inherit the per-component group
// minimum so failure is penalized without shrinking the group).
Group sample_group(const DenoiserParams& params, const NoiseSchedule& schedule,
                   const LatentCodec& codec, const GroupTask& task,
                   const RewardContext& reward_ctx, const TrainerConfig& cfg,
                   std::uint64_t init_seed, std::uint64_t noise_seed_base);

// Per-objective z-scores with population std; a column whose std falls below
// the floor is zeroed.
void normalize_rewards(Group& group, double std_floor);

// Cross-objective reduction (sum of z-scores, or mean behind the config
// switch), re-normalized within the group with the same floor rule.
void compute_advantages(Group& group, const TrainerConfig& cfg);

struct SurrogateStats {
  double j = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double loss = 0.0;  // -J + kl_coef * KL
  long terms = 0;
};

// Clipped-ratio objective over the retained (noisiest) step prefix, with the
// per-step Gaussian KL toward theta_ref. theta_old is implicit: the recorded
// transition means were produced by the rollout-time parameters. Gradients of
// the total loss accumulate into `grads` when non-null.
SurrogateStats surrogate(const DenoiserParams& params,
                         const DenoiserParams& theta_ref,
                         const std::vector<Group>& groups,
                         const NoiseSchedule& schedule,
                         const TrainerConfig& cfg,
                         DenoiserGrads* grads = nullptr);

// Decoupled weight decay Adam. step() returns false (parameters and moments
// untouched) when the gradient is non-finite.
class AdamW {
 public:
  AdamW(const DenoiserParams& like, const TrainerConfig& cfg);

  bool step(DenoiserParams& params, const DenoiserGrads& grads);

  DenoiserParams& moment1() { return m_; }
  DenoiserParams& moment2() { return v_; }
  std::int64_t& count() { return t_; }

 private:
  DenoiserParams m_, v_;
  std::int64_t t_ = 0;
  double lr_, beta1_, beta2_, weight_decay_, eps_;
};

struct TrainStepMetrics {
  SurrogateStats stats;
  std::array<double, 4> reward_mean{};
  std::array<double, 4> reward_std{};  // mean over groups of per-group std
  double failure_rate = 0.0;
  int groups_used = 0;
  bool applied = false;  // false when the update was rejected
};

// Normalizes, computes advantages and applies one optimizer update over a
// batch of groups sampled under the current parameters.
TrainStepMetrics train_step(DenoiserParams& params,
                            const DenoiserParams& theta_ref,
                            std::vector<Group>& groups,
                            const NoiseSchedule& schedule,
                            const TrainerConfig& cfg, AdamW& optimizer);

std::array<double, 4> group_reward_stds(const Group& group);
std::array<double, 4> group_reward_means(const Group& group);

enum class GuardState { proceed, warn, halt };

struct GuardConfig {
  int window = 20;
  double std_floor = 1e-4;
  double failure_halt_rate = 0.5;
};

// Reward-collapse watchdog: warns when the median group std of every
// objective sits below the floor across the window, halts when evaluator
// failures also dominate.
class VarianceGuard {
 public:
  explicit VarianceGuard(const GuardConfig& cfg = {}) : cfg_(cfg) {}

  void push(const std::array<double, 4>& stds, double failure_rate);
  GuardState state() const;

 private:
  GuardConfig cfg_;
  std::deque<std::array<double, 4>> stds_;
  std::deque<double> failures_;
};

}  // namespace wmrl
