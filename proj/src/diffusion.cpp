#include "wmrl/diffusion.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace wmrl {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

constexpr int kCheckpointVersion = 1;

MatrixXd time_features(const VectorXd& t, int count) {
  MatrixXd f(count, t.size());
  for (int col = 0; col < t.size(); ++col) {
    for (int j = 0; j < count / 2; ++j) {
      const double arg = M_PI * std::ldexp(1.0, j) * t[col];
      f(2 * j, col) = std::sin(arg);
      f(2 * j + 1, col) = std::cos(arg);
    }
  }
  return f;
}

}  // namespace

NoiseSchedule::Marginal NoiseSchedule::marginal(double t) const {
  const double alpha = std::exp(-0.5 * integral_beta(t));
  return {alpha, std::sqrt(std::max(0.0, 1.0 - alpha * alpha))};
}

double NoiseSchedule::sigma_ratio(double t) const {
  return std::sqrt(std::max(0.0, std::expm1(integral_beta(t))));
}

double NoiseSchedule::time_of_sigma_ratio(double ratio) const {
  const double a = std::log1p(ratio * ratio);  // target integral
  double t = 0.0;
  const double slope = beta_max - beta_min;
  if (std::abs(slope) < 1e-12) {
    t = a / beta_min;
  } else {
    t = (-beta_min + std::sqrt(beta_min * beta_min + 2.0 * slope * a)) / slope;
  }
  return std::clamp(t, t_min, 1.0);
}

std::vector<double> NoiseSchedule::grid() const {
  std::vector<double> g(steps + 1);
  for (int k = 0; k <= steps; ++k) {
    g[k] = t_min + (1.0 - t_min) * k / steps;
  }
  return g;
}

double LatentCodec::encode_depth(double d) const {
  return 2.0 * d / (d + depth_midpoint) - 1.0;
}

double LatentCodec::decode_depth(double u) const {
  const double v_far = far_clip / (far_clip + depth_midpoint);
  const double v = std::clamp(0.5 * (u + 1.0), 0.0, v_far);
  const double d = depth_midpoint * v / (1.0 - v);
  return d < near_clip ? 0.0 : d;
}

Eigen::VectorXd LatentCodec::encode_frame(const Frame& frame) const {
  const int h = frame.height(), w = frame.width();
  VectorXd out(2 * h * w);
  int i = 0;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) out[i++] = encode_depth(frame.depth(v, u));
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) out[i++] = 2.0 * frame.intensity(v, u) - 1.0;
  return out;
}

Eigen::VectorXd LatentCodec::encode_frames(const std::vector<Frame>& frames,
                                           int first, int count) const {
  const int fs = 2 * frames[first].height() * frames[first].width();
  VectorXd out(fs * count);
  for (int i = 0; i < count; ++i) {
    out.segment(i * fs, fs) = encode_frame(frames[first + i]);
  }
  return out;
}

std::vector<Frame> LatentCodec::decode_frames(const Eigen::VectorXd& latent,
                                              const LatentShape& shape) const {
  std::vector<Frame> frames(shape.horizon);
  int i = 0;
  for (int f = 0; f < shape.horizon; ++f) {
    frames[f].depth = Image(shape.height, shape.width);
    frames[f].intensity = Image(shape.height, shape.width);
    for (int v = 0; v < shape.height; ++v)
      for (int u = 0; u < shape.width; ++u)
        frames[f].depth(v, u) = decode_depth(latent[i++]);
    for (int v = 0; v < shape.height; ++v)
      for (int u = 0; u < shape.width; ++u)
        frames[f].intensity(v, u) =
            std::clamp(0.5 * (latent[i++] + 1.0), 0.0, 1.0);
  }
  return frames;
}

DenoiserParams DenoiserParams::init(const DenoiserConfig& config,
                                    std::uint64_t seed) {
  RandomStream rng(derive_seed(seed, "denoiser-init"));
  auto dense = [&rng](int rows, int cols, double gain) {
    MatrixXd w(rows, cols);
    const double scale = gain / std::sqrt(static_cast<double>(cols));
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) w(r, c) = scale * rng.normal();
    return w;
  };
  DenoiserParams p;
  p.config = config;
  p.w_act = dense(config.action_embed, config.action_dim, 1.0);
  p.w_in = dense(config.width, config.input_dim(), 1.0);
  p.b_in = MatrixXd::Zero(config.width, 1);
  for (int b = 0; b < config.blocks; ++b) {
    Block blk;
    blk.w1 = dense(config.width, config.width, 1.0);
    blk.b1 = MatrixXd::Zero(config.width, 1);
    blk.w2 = dense(config.width, config.width, 0.1);  // gentle residual start
    blk.b2 = MatrixXd::Zero(config.width, 1);
    p.blocks.push_back(std::move(blk));
  }
  p.w_out = dense(config.shape.flat(), config.width, 0.05);
  p.b_out = MatrixXd::Zero(config.shape.flat(), 1);
  return p;
}

DenoiserParams DenoiserParams::shaped(const DenoiserConfig& config) {
  DenoiserParams p;
  p.config = config;
  p.w_act = MatrixXd::Zero(config.action_embed, config.action_dim);
  p.w_in = MatrixXd::Zero(config.width, config.input_dim());
  p.b_in = MatrixXd::Zero(config.width, 1);
  for (int b = 0; b < config.blocks; ++b) {
    Block z;
    z.w1 = MatrixXd::Zero(config.width, config.width);
    z.b1 = MatrixXd::Zero(config.width, 1);
    z.w2 = MatrixXd::Zero(config.width, config.width);
    z.b2 = MatrixXd::Zero(config.width, 1);
    p.blocks.push_back(std::move(z));
  }
  p.w_out = MatrixXd::Zero(config.shape.flat(), config.width);
  p.b_out = MatrixXd::Zero(config.shape.flat(), 1);
  return p;
}

DenoiserParams DenoiserParams::zeros_like(const DenoiserParams& other) {
  return shaped(other.config);
}

std::vector<const Eigen::MatrixXd*> DenoiserParams::tensors() const {
  std::vector<const MatrixXd*> out{&w_act, &w_in, &b_in};
  for (const Block& blk : blocks) {
    out.push_back(&blk.w1);
    out.push_back(&blk.b1);
    out.push_back(&blk.w2);
    out.push_back(&blk.b2);
  }
  out.push_back(&w_out);
  out.push_back(&b_out);
  return out;
}

std::vector<Eigen::MatrixXd*> DenoiserParams::tensors() {
  std::vector<MatrixXd*> out{&w_act, &w_in, &b_in};
  for (Block& blk : blocks) {
    out.push_back(&blk.w1);
    out.push_back(&blk.b1);
    out.push_back(&blk.w2);
    out.push_back(&blk.b2);
  }
  out.push_back(&w_out);
  out.push_back(&b_out);
  return out;
}

std::size_t DenoiserParams::parameter_count() const {
  std::size_t n = 0;
  for (const MatrixXd* t : tensors()) n += t->size();
  return n;
}

bool DenoiserParams::all_finite() const {
  for (const MatrixXd* t : tensors())
    if (!t->allFinite()) return false;
  return true;
}

Eigen::VectorXd DenoiserParams::flatten() const {
  VectorXd v(parameter_count());
  Eigen::Index off = 0;
  for (const MatrixXd* t : tensors()) {
    v.segment(off, t->size()) =
        Eigen::Map<const VectorXd>(t->data(), t->size());
    off += t->size();
  }
  return v;
}

void DenoiserParams::unflatten(const Eigen::VectorXd& v) {
  Eigen::Index off = 0;
  for (MatrixXd* t : tensors()) {
    Eigen::Map<VectorXd>(t->data(), t->size()) = v.segment(off, t->size());
    off += t->size();
  }
}

Eigen::MatrixXd denoiser_forward(const DenoiserParams& params,
                                 const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd& t,
                                 const Eigen::MatrixXd& x0,
                                 const Eigen::MatrixXd& actions,
                                 DenoiserActivations* cache) {
  const DenoiserConfig& cfg = params.config;
  const Eigen::Index batch = x.cols();
  MatrixXd input(cfg.input_dim(), batch);
  input.topRows(cfg.shape.flat()) = x;
  input.middleRows(cfg.shape.flat(), cfg.x0_dim()) = x0;
  input.middleRows(cfg.shape.flat() + cfg.x0_dim(), cfg.time_features) =
      time_features(t, cfg.time_features);
  input.bottomRows(cfg.action_embed).noalias() = params.w_act * actions;

  MatrixXd h = params.w_in * input;
  h.colwise() += params.b_in.col(0);

  if (cache) {
    cache->input = input;
    cache->actions = actions;
    cache->block_in.clear();
    cache->block_tanh.clear();
  }
  for (const DenoiserParams::Block& blk : params.blocks) {
    if (cache) cache->block_in.push_back(h);
    MatrixXd pre = blk.w1 * h;
    pre.colwise() += blk.b1.col(0);
    const MatrixXd q = pre.array().tanh().matrix();
    if (cache) cache->block_tanh.push_back(q);
    h.noalias() += blk.w2 * q;
    h.colwise() += blk.b2.col(0);
  }
  if (cache) cache->features = h;

  MatrixXd out = params.w_out * h;
  out.colwise() += params.b_out.col(0);
  return out;
}

void denoiser_backward(const DenoiserParams& params,
                       const DenoiserActivations& cache,
                       const Eigen::MatrixXd& grad_out, DenoiserGrads& grads,
                       Eigen::MatrixXd* grad_x) {
  const DenoiserConfig& cfg = params.config;
  grads.w_out.noalias() += grad_out * cache.features.transpose();
  grads.b_out.col(0) += grad_out.rowwise().sum();

  MatrixXd gh = params.w_out.transpose() * grad_out;
  for (int b = static_cast<int>(params.blocks.size()) - 1; b >= 0; --b) {
    const DenoiserParams::Block& blk = params.blocks[b];
    DenoiserParams::Block& gblk = grads.blocks[b];
    const MatrixXd& q = cache.block_tanh[b];
    gblk.w2.noalias() += gh * q.transpose();
    gblk.b2.col(0) += gh.rowwise().sum();
    const MatrixXd gq = blk.w2.transpose() * gh;
    const MatrixXd gp =
        (gq.array() * (1.0 - q.array().square())).matrix();
    gblk.w1.noalias() += gp * cache.block_in[b].transpose();
    gblk.b1.col(0) += gp.rowwise().sum();
    gh.noalias() += blk.w1.transpose() * gp;
  }
  grads.w_in.noalias() += gh * cache.input.transpose();
  grads.b_in.col(0) += gh.rowwise().sum();

  const MatrixXd gin = params.w_in.transpose() * gh;
  grads.w_act.noalias() +=
      gin.bottomRows(cfg.action_embed) * cache.actions.transpose();
  if (grad_x) {
    *grad_x = gin.topRows(cfg.shape.flat());
  }
}

std::vector<RolloutRecord> sample_rollouts(
    const DenoiserParams& params, const NoiseSchedule& schedule,
    const DiffusionContext& context, double eta,
    const std::vector<std::uint64_t>& init_seeds,
    const std::vector<std::uint64_t>& noise_seeds, bool record_steps) {
  const int group_size = static_cast<int>(init_seeds.size());
  const int flat = params.config.shape.flat();
  const int n = schedule.steps;
  const double dt = schedule.dt();
  const std::vector<double> grid = schedule.grid();

  MatrixXd x(flat, group_size);
  for (int g = 0; g < group_size; ++g) {
    RandomStream init_rng(derive_seed(init_seeds[g], "rollout-init"));
    for (int i = 0; i < flat; ++i) x(i, g) = init_rng.normal();
  }

  std::vector<RandomStream> noise;
  noise.reserve(group_size);
  for (int g = 0; g < group_size; ++g) {
    noise.emplace_back(noise_seeds[g]);
  }

  std::vector<RolloutRecord> records(group_size);
  for (auto& rec : records) {
    rec.eta = eta;
    if (record_steps) rec.steps.reserve(n);
  }

  const MatrixXd x0 = context.x0_latent * Eigen::RowVectorXd::Ones(group_size);
  const MatrixXd act = context.actions * Eigen::RowVectorXd::Ones(group_size);

  for (int k = n; k >= 1; --k) {
    const double t = grid[k];
    const double beta = schedule.beta(t);
    const double sigma_t = schedule.marginal(t).sigma;
    const double step_std = eta * std::sqrt(beta * dt);
    const VectorXd t_batch = VectorXd::Constant(group_size, t);
    const MatrixXd eps = denoiser_forward(params, x, t_batch, x0, act);
    for (int g = 0; g < group_size; ++g) {
      if (records[g].failed) continue;
      // mean of the eta-family Euler-Maruyama transition
      const VectorXd score = -eps.col(g) / sigma_t;
      const VectorXd mean =
          x.col(g) +
          0.5 * beta * dt * (x.col(g) + (1.0 + eta * eta) * score);
      VectorXd sample = mean;
      if (eta > 0.0) {
        for (int i = 0; i < flat; ++i) {
          sample[i] += step_std * noise[g].normal();
        }
      }
      if (!sample.allFinite()) {
        records[g].failed = true;
        continue;
      }
      if (record_steps) {
        RolloutStep step;
        step.input = x.col(g);
        step.mean = mean;
        step.sample = sample;
        step.std = step_std;
        step.t = t;
        step.beta = beta;
        records[g].steps.push_back(std::move(step));
      }
      x.col(g) = sample;
    }
  }
  for (int g = 0; g < group_size; ++g) {
    records[g].final_latent = x.col(g);
  }
  return records;
}

std::vector<RolloutRecord> sample_rollout_group(
    const DenoiserParams& params, const NoiseSchedule& schedule,
    const DiffusionContext& context, int group_size, double eta,
    std::uint64_t init_seed, std::uint64_t noise_seed_base,
    bool record_steps) {
  std::vector<std::uint64_t> init_seeds(group_size, init_seed);
  std::vector<std::uint64_t> noise_seeds(group_size);
  for (int g = 0; g < group_size; ++g) {
    noise_seeds[g] = derive_seed(noise_seed_base, "member", g);
  }
  return sample_rollouts(params, schedule, context, eta, init_seeds,
                         noise_seeds, record_steps);
}

RolloutRecord sample_rollout(const DenoiserParams& params,
                             const NoiseSchedule& schedule,
                             const DiffusionContext& context,
                             const SamplerConfig& config) {
  std::vector<std::uint64_t> init_seeds{config.init_seed};
  std::vector<std::uint64_t> noise_seeds{config.noise_seed};
  return sample_rollouts(params, schedule, context, config.eta, init_seeds,
                         noise_seeds, config.record_steps)[0];
}

double step_log_density(const RolloutStep& step, const Eigen::VectorXd& mean) {
  if (step.std <= 0.0) {
    throw NumericError(
        "step_log_density: zero transition std (requires eta > 0)");
  }
  const double d = static_cast<double>(step.sample.size());
  const double var = step.std * step.std;
  const double quad = (step.sample - mean).squaredNorm() / (2.0 * var);
  return -0.5 * d * std::log(2.0 * M_PI) - d * std::log(step.std) - quad;
}

double dsm_loss(const DenoiserParams& params, const NoiseSchedule& schedule,
                const std::vector<const SftItem*>& batch, const DsmConfig& cfg,
                RandomStream& rng, DenoiserGrads* grads) {
  const int flat = params.config.shape.flat();
  const int b = static_cast<int>(batch.size());
  if (b == 0) throw NumericError("dsm_loss: empty batch");

  MatrixXd x(flat, b), x0(params.config.x0_dim(), b),
      act(params.config.action_dim, b), z(flat, b);
  VectorXd t(b), weight(b);
  const double lo = schedule.sigma_ratio(schedule.t_min);
  const double hi = schedule.sigma_ratio(1.0);
  for (int i = 0; i < b; ++i) {
    const double ratio =
        std::clamp(std::exp(cfg.p_mean + cfg.p_std * rng.normal()), lo, hi);
    t[i] = schedule.time_of_sigma_ratio(ratio);
    const double rw = std::min(ratio, cfg.weight_sigma_cap);
    weight[i] = (rw * rw + cfg.sigma_data * cfg.sigma_data) /
                (cfg.sigma_data * cfg.sigma_data);
    const auto marg = schedule.marginal(t[i]);
    for (int j = 0; j < flat; ++j) z(j, i) = rng.normal();
    x.col(i) = marg.alpha * batch[i]->target + marg.sigma * z.col(i);
    x0.col(i) = batch[i]->x0_latent;
    act.col(i) = batch[i]->actions;
  }

  DenoiserActivations cache;
  const MatrixXd eps =
      denoiser_forward(params, x, t, x0, act, grads ? &cache : nullptr);
  const MatrixXd err = eps - z;
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    loss += weight[i] * err.col(i).squaredNorm() / flat;
  }
  loss = cfg.loss_scale * loss / b;

  if (grads) {
    MatrixXd grad_out = err;
    for (int i = 0; i < b; ++i) {
      grad_out.col(i) *= cfg.loss_scale * weight[i] * 2.0 / (flat * b);
    }
    denoiser_backward(params, cache, grad_out, *grads);
  }
  return loss;
}

namespace {

void append_tensor_f32(std::string& out, const MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float x = static_cast<float>(m.data()[i]);
    char buf[4];
    std::memcpy(buf, &x, 4);
    out.append(buf, 4);
  }
}

void append_tensor_f64(std::string& out, const MatrixXd& m) {
  const char* p = reinterpret_cast<const char*>(m.data());
  out.append(p, m.size() * sizeof(double));
}

void write_blob(const std::filesystem::path& file, const std::string& blob) {
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw IoError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, file);
}

std::string read_blob(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json schedule_to_json(const NoiseSchedule& s) {
  return {{"beta_min", s.beta_min},
          {"beta_max", s.beta_max},
          {"steps", s.steps},
          {"t_min", s.t_min}};
}

NoiseSchedule schedule_from_json(const json& j) {
  NoiseSchedule s;
  s.beta_min = j.at("beta_min").get<double>();
  s.beta_max = j.at("beta_max").get<double>();
  s.steps = j.at("steps").get<int>();
  s.t_min = j.at("t_min").get<double>();
  return s;
}

json config_to_json(const DenoiserConfig& c) {
  return {{"width", c.width},
          {"blocks", c.blocks},
          {"time_features", c.time_features},
          {"action_embed", c.action_embed},
          {"action_dim", c.action_dim},
          {"horizon", c.shape.horizon},
          {"height", c.shape.height},
          {"frame_width", c.shape.width},
          {"channels", c.shape.channels}};
}

DenoiserConfig config_from_json(const json& j) {
  DenoiserConfig c;
  c.width = j.at("width").get<int>();
  c.blocks = j.at("blocks").get<int>();
  c.time_features = j.at("time_features").get<int>();
  c.action_embed = j.at("action_embed").get<int>();
  c.action_dim = j.at("action_dim").get<int>();
  c.shape.horizon = j.at("horizon").get<int>();
  c.shape.height = j.at("height").get<int>();
  c.shape.width = j.at("frame_width").get<int>();
  c.shape.channels = j.at("channels").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file,
                     const DenoiserParams& params,
                     const NoiseSchedule& schedule, std::int64_t step) {
  json header = {{"version", kCheckpointVersion},
                 {"dtype", "f32"},
                 {"step", step},
                 {"schedule", schedule_to_json(schedule)},
                 {"model", config_to_json(params.config)},
                 {"tensors", json::array()}};
  for (const MatrixXd* t : params.tensors()) {
    header["tensors"].push_back({{"rows", t->rows()}, {"cols", t->cols()}});
  }
  std::string blob = header.dump();
  blob.push_back('\n');
  for (const MatrixXd* t : params.tensors()) append_tensor_f32(blob, *t);
  write_blob(file, blob);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  const std::string blob = read_blob(file);
  const size_t nl = blob.find('\n');
  if (nl == std::string::npos) throw IoError("bad checkpoint: " + file.string());
  const json header = json::parse(blob.substr(0, nl));
  if (header.at("version").get<int>() != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version in " + file.string());
  }
  Checkpoint ckpt;
  ckpt.schedule = schedule_from_json(header.at("schedule"));
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.params = DenoiserParams::shaped(config_from_json(header.at("model")));
  size_t off = nl + 1;
  for (MatrixXd* t : ckpt.params.tensors()) {
    const size_t bytes = static_cast<size_t>(t->size()) * 4;
    if (off + bytes > blob.size()) {
      throw IoError("truncated checkpoint: " + file.string());
    }
    for (Eigen::Index i = 0; i < t->size(); ++i) {
      float x;
      std::memcpy(&x, blob.data() + off + i * 4, 4);
      t->data()[i] = static_cast<double>(x);
    }
    off += bytes;
  }
  if (off != blob.size()) throw IoError("checkpoint size mismatch");
  return ckpt;
}

void save_train_state(const std::filesystem::path& file,
                      const DenoiserParams& params, const DenoiserParams& m,
                      const DenoiserParams& v, std::int64_t adam_step,
                      std::int64_t train_step) {
  json header = {{"version", kCheckpointVersion},
                 {"dtype", "f64"},
                 {"adam_step", adam_step},
                 {"train_step", train_step},
                 {"model", config_to_json(params.config)}};
  std::string blob = header.dump();
  blob.push_back('\n');
  for (const DenoiserParams* set : {&params, &m, &v}) {
    for (const MatrixXd* t : set->tensors()) append_tensor_f64(blob, *t);
  }
  write_blob(file, blob);
}

TrainState load_train_state(const std::filesystem::path& file,
                            const DenoiserParams& reference) {
  const std::string blob = read_blob(file);
  const size_t nl = blob.find('\n');
  if (nl == std::string::npos) throw IoError("bad train state: " + file.string());
  const json header = json::parse(blob.substr(0, nl));
  TrainState state;
  state.adam_step = header.at("adam_step").get<std::int64_t>();
  state.train_step = header.at("train_step").get<std::int64_t>();
  state.params = DenoiserParams::zeros_like(reference);
  state.m = DenoiserParams::zeros_like(reference);
  state.v = DenoiserParams::zeros_like(reference);
  size_t off = nl + 1;
  for (DenoiserParams* set : {&state.params, &state.m, &state.v}) {
    for (MatrixXd* t : set->tensors()) {
      const size_t bytes = static_cast<size_t>(t->size()) * sizeof(double);
      if (off + bytes > blob.size()) {
        throw IoError("truncated train state: " + file.string());
      }
      std::memcpy(t->data(), blob.data() + off, bytes);
      off += bytes;
    }
  }
  if (off != blob.size()) throw IoError("train state size mismatch");
  return state;
}

}  // namespace wmrl
