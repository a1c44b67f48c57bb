#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wmrl/dataset.hpp"
#include "wmrl/random.hpp"
#include "wmrl/scene.hpp"

namespace wmrl {

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Linear variance-preserving schedule on t in [0,1] (data at t=0).
struct NoiseSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  int steps = 35;
  double t_min = 1e-3;

  double beta(double t) const { return beta_min + (beta_max - beta_min) * t; }
  double integral_beta(double t) const {
    return beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
  }

  struct Marginal {
    double alpha;  // signal coefficient exp(-integral/2)
    double sigma;  // sqrt(1 - alpha^2)
  };
  Marginal marginal(double t) const;

  // sigma/alpha at t, and its closed-form inverse (clamped to [t_min, 1])
  double sigma_ratio(double t) const;
  double time_of_sigma_ratio(double ratio) const;

  // integration grid: grid()[k] for k = 0..steps, grid()[steps] = 1
  std::vector<double> grid() const;
  double dt() const { return (1.0 - t_min) / steps; }
};

struct LatentShape {
  int horizon = 12;
  int height = 32;
  int width = 32;
  int channels = 2;  // depth, intensity

  int frame_size() const { return height * width * channels; }
  int flat() const { return horizon * frame_size(); }
};

// Fixed invertible per-channel map between frames and [-1,1] latents. Depth
// is squashed by d / (d + midpoint); depth 0 (no-hit) maps to -1 exactly and
// decoding returns 0 for anything below the near plane.
struct LatentCodec {
  double depth_midpoint = 5.0;
  double near_clip = 0.1;
  double far_clip = 50.0;

  double encode_depth(double d) const;
  double decode_depth(double u) const;

  Eigen::VectorXd encode_frame(const Frame& frame) const;
  Eigen::VectorXd encode_frames(const std::vector<Frame>& frames, int first,
                                int count) const;
  std::vector<Frame> decode_frames(const Eigen::VectorXd& latent,
                                   const LatentShape& shape) const;
};

struct DenoiserConfig {
  int width = 256;
  int blocks = 2;
  int time_features = 16;
  int action_embed = 32;
  int action_dim = 72;  // 6 * horizon
  LatentShape shape;
  int x0_dim() const { return shape.frame_size(); }
  int input_dim() const {
    return shape.flat() + x0_dim() + time_features + action_embed;
  }
};

// Fully-connected residual noise predictor over the flattened latent
// sequence, conditioned on the x0 latent, sinusoidal time features and a
// learned linear action embedding. Biases are stored as n-by-1 matrices so
// every tensor can be visited uniformly.
struct DenoiserParams {
  DenoiserConfig config;
  Eigen::MatrixXd w_act;
  Eigen::MatrixXd w_in, b_in;
  struct Block {
    Eigen::MatrixXd w1, b1, w2, b2;
  };
  std::vector<Block> blocks;
  Eigen::MatrixXd w_out, b_out;

  static DenoiserParams init(const DenoiserConfig& config, std::uint64_t seed);
  static DenoiserParams shaped(const DenoiserConfig& config);  // zero-filled
  static DenoiserParams zeros_like(const DenoiserParams& other);

  std::vector<const Eigen::MatrixXd*> tensors() const;
  std::vector<Eigen::MatrixXd*> tensors();
  std::size_t parameter_count() const;
  bool all_finite() const;

  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& v);
};

using DenoiserGrads = DenoiserParams;

struct DenoiserActivations {
  Eigen::MatrixXd input;    // assembled input, in_dim x batch
  Eigen::MatrixXd actions;  // action_dim x batch
  std::vector<Eigen::MatrixXd> block_in;
  std::vector<Eigen::MatrixXd> block_tanh;
  Eigen::MatrixXd features;  // input to the output layer
};

// Batched apply; columns are samples. x is flat x batch, t holds one time per
// column, x0 is x0_dim x batch, actions is action_dim x batch.
Eigen::MatrixXd denoiser_forward(const DenoiserParams& params,
                                 const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd& t,
                                 const Eigen::MatrixXd& x0,
                                 const Eigen::MatrixXd& actions,
                                 DenoiserActivations* cache = nullptr);

// Accumulates parameter gradients into `grads` (and optionally input
// gradients w.r.t. x into grad_x).
void denoiser_backward(const DenoiserParams& params,
                       const DenoiserActivations& cache,
                       const Eigen::MatrixXd& grad_out, DenoiserGrads& grads,
                       Eigen::MatrixXd* grad_x = nullptr);

// Conditioning for one context.
struct DiffusionContext {
  Eigen::VectorXd x0_latent;
  Eigen::VectorXd actions;  // flattened a_1..a_T
};

struct RolloutStep {
  Eigen::VectorXd input;   // state entering the step
  Eigen::VectorXd mean;    // transition mean under the sampling policy
  Eigen::VectorXd sample;  // drawn next state
  double std = 0.0;        // eta * sqrt(beta_k dt)
  double t = 0.0;
  double beta = 0.0;
};

struct RolloutRecord {
  Eigen::VectorXd final_latent;
  std::vector<RolloutStep> steps;  // execution order, noisiest first
  double eta = 1.0;
  bool failed = false;
};

struct SamplerConfig {
  double eta = 1.0;
  std::uint64_t init_seed = 0;   // shared across a group
  std::uint64_t noise_seed = 0;  // per member
  bool record_steps = true;
};

RolloutRecord sample_rollout(const DenoiserParams& params,
                             const NoiseSchedule& schedule,
                             const DiffusionContext& context,
                             const SamplerConfig& config);

// Batched sampling of one context; member i draws its initial state from
// init_seeds[i] (equal seeds share the initial noise exactly) and its
// per-step noise from noise_seeds[i].
std::vector<RolloutRecord> sample_rollouts(
    const DenoiserParams& params, const NoiseSchedule& schedule,
    const DiffusionContext& context, double eta,
    const std::vector<std::uint64_t>& init_seeds,
    const std::vector<std::uint64_t>& noise_seeds, bool record_steps = true);

// G rollouts sharing the initial noise drawn from init_seed; member i uses
// noise stream derive_seed(noise_seed_base, "member", i). Batched internally.
std::vector<RolloutRecord> sample_rollout_group(
    const DenoiserParams& params, const NoiseSchedule& schedule,
    const DiffusionContext& context, int group_size, double eta,
    std::uint64_t init_seed, std::uint64_t noise_seed_base,
    bool record_steps = true);

// Log-density of the recorded sample under a Gaussian with the given mean and
// the recorded std. Throws NumericError when std == 0 (eta = 0 rollouts carry
// no density).
double step_log_density(const RolloutStep& step, const Eigen::VectorXd& mean);

struct DsmConfig {
  double loss_scale = 10.0;
  double sigma_data = 1.0;
  double p_mean = -1.2;  // log-normal noise-level sampling
  double p_std = 1.2;
  double weight_sigma_cap = 10.0;  // stability cap on the tail weights
};

struct SftItem {
  Eigen::VectorXd target;  // clean latent sequence
  Eigen::VectorXd x0_latent;
  Eigen::VectorXd actions;
};

// Noise-prediction loss with EDM-style weighting, averaged over the batch.
// Gradients (when requested) are exact and accumulate into `grads`.
double dsm_loss(const DenoiserParams& params, const NoiseSchedule& schedule,
                const std::vector<const SftItem*>& batch, const DsmConfig& cfg,
                RandomStream& rng, DenoiserGrads* grads = nullptr);

struct Checkpoint {
  DenoiserParams params;
  NoiseSchedule schedule;
  std::int64_t step = 0;
};

// One file: JSON header line, then the parameter block as little-endian
// float32 in tensor order.
void save_checkpoint(const std::filesystem::path& file,
                     const DenoiserParams& params,
                     const NoiseSchedule& schedule, std::int64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& file);

// Full-precision training state (parameters + optimizer moments) used for
// exact resume; the checkpoint format above is the exchange format.
void save_train_state(const std::filesystem::path& file,
                      const DenoiserParams& params, const DenoiserParams& m,
                      const DenoiserParams& v, std::int64_t adam_step,
                      std::int64_t train_step);
struct TrainState {
  DenoiserParams params, m, v;
  std::int64_t adam_step = 0;
  std::int64_t train_step = 0;
};
TrainState load_train_state(const std::filesystem::path& file,
                            const DenoiserParams& reference);

}  // namespace wmrl
