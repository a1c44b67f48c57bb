#include "wmrl/rewards.hpp"

#include <cmath>

#include "wmrl/dataset.hpp"

namespace wmrl {

CumulativePoses accumulate_relatives(const EvalOutput3D& eval3d) {
  CumulativePoses cum;
  Pose pose = Pose::identity();
  for (const PoseEstimate& est : eval3d.relatives) {
    if (est.confidence <= 0.0) cum.ok = false;
    pose = compose(pose, est.relative);
    cum.absolute.push_back(pose);
  }
  if (cum.absolute.empty()) cum.ok = false;
  return cum;
}

double align_scale(const CumulativePoses& cum,
                   const std::vector<Action6DoF>& actions) {
  double num = 0.0, den = 0.0;
  for (size_t t = 0; t < cum.absolute.size(); ++t) {
    const Vec3 est = cum.absolute[t].translation;
    const Vec3 cmd(actions[t + 1].x, actions[t + 1].y, actions[t + 1].z);
    num += est.dot(cmd);
    den += est.squaredNorm();
  }
  return den > 1e-12 ? num / den : 1.0;
}

double reward_translation(const CumulativePoses& cum,
                          const std::vector<Action6DoF>& actions,
                          bool scale_alignment) {
  const size_t horizon = cum.absolute.size();
  const double scale = scale_alignment ? align_scale(cum, actions) : 1.0;
  double mean_sq = 0.0;
  double final_sq = 0.0;
  for (size_t t = 0; t < horizon; ++t) {
    const Vec3 cmd(actions[t + 1].x, actions[t + 1].y, actions[t + 1].z);
    const Vec3 err = scale * cum.absolute[t].translation - cmd;
    mean_sq += err.squaredNorm();
    if (t + 1 == horizon) final_sq = err.squaredNorm();
  }
  mean_sq /= static_cast<double>(horizon);
  return -(mean_sq + final_sq);
}

double reward_rotation(const CumulativePoses& cum,
                       const std::vector<Action6DoF>& actions) {
  double sum = 0.0;
  for (size_t t = 0; t < cum.absolute.size(); ++t) {
    const Pose commanded = action_to_pose(actions[t + 1]);
    sum += rot_geodesic(cum.absolute[t].rotation, commanded.rotation);
  }
  return -sum;
}

namespace {

// inverse-depth bilinear lookup requiring all four neighbours valid
bool lookup_depth(const Image& depth, double u, double v, double* out) {
  const int w = static_cast<int>(depth.cols());
  const int h = static_cast<int>(depth.rows());
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1.0 && v <= h - 1.0)) return false;
  int u0 = static_cast<int>(u);
  int v0 = static_cast<int>(v);
  if (u0 > w - 2) u0 = w - 2;
  if (v0 > h - 2) v0 = h - 2;
  const double d00 = depth(v0, u0), d01 = depth(v0, u0 + 1);
  const double d10 = depth(v0 + 1, u0), d11 = depth(v0 + 1, u0 + 1);
  if (d00 <= 0.0 || d01 <= 0.0 || d10 <= 0.0 || d11 <= 0.0) return false;
  const double fu = u - u0;
  const double fv = v - v0;
  const double q = (1 - fv) * ((1 - fu) / d00 + fu / d01) +
                   fv * ((1 - fu) / d10 + fu / d11);
  *out = 1.0 / q;
  return true;
}

}  // namespace

DtriResult reward_dtri(const std::vector<Frame>& frames,
                       const EvalOutput3D& eval3d, const CameraIntrinsics& k,
                       double gamma) {
  DtriResult result;
  const size_t pairs = eval3d.relatives.size();
  result.per_pair.resize(pairs, 0.0);
  result.pair_empty.resize(pairs, false);
  for (size_t t = 0; t < pairs; ++t) {
    const Frame& src = frames[t];
    const Frame& dst = frames[t + 1];
    // relative pose is "camera t+1 in camera t"; points move by its inverse
    const Pose point_transform = invert(eval3d.relatives[t].relative);
    long inliers = 0, domain = 0;
    for (int v = 0; v < k.height; ++v) {
      for (int u = 0; u < k.width; ++u) {
        const double d = src.depth(v, u);
        if (d <= 0.0) continue;
        const Reprojection re =
            reproject(Vec2(u, v), d, point_transform, k, k);
        if (!re.valid || re.expected_depth <= 0.0) continue;
        double observed = 0.0;
        if (!lookup_depth(dst.depth, re.pixel.x(), re.pixel.y(), &observed)) {
          continue;
        }
        ++domain;
        if (std::abs(observed - re.expected_depth) / re.expected_depth <
            gamma) {
          ++inliers;
        }
      }
    }
    if (domain == 0) {
      result.pair_empty[t] = true;
      result.per_pair[t] = 0.0;
    } else {
      result.per_pair[t] = static_cast<double>(inliers) / domain;
    }
    result.ratio += result.per_pair[t];
  }
  if (pairs > 0) result.ratio /= static_cast<double>(pairs);
  return result;
}

double reward_video(const VideoScores& scores, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0 || std::abs(alpha + beta - 1.0) > 1e-12) {
    throw ConfigError("reward_video: weights must be >= 0 and sum to 1");
  }
  return alpha * scores.visual + beta * scores.motion;
}

RewardVector evaluate_all(const std::vector<Frame>& frames,
                          const std::vector<Action6DoF>& actions,
                          const RewardContext& ctx) {
  RewardVector reward;
  const EvalOutput3D eval3d =
      ctx.evaluator3d->evaluate_rollout(frames, ctx.camera);
  const VideoScores scores = ctx.video->evaluate(
      std::vector<Frame>(frames.begin() + 1, frames.end()));
  reward.video = reward_video(scores, ctx.config.alpha, ctx.config.beta);

  const CumulativePoses cum = accumulate_relatives(eval3d);
  if (!cum.ok) {
    reward.failed = true;
    reward.translation = 0.0;
    reward.rotation = 0.0;
    reward.depth_inlier = 0.0;
    return reward;
  }
  reward.translation =
      reward_translation(cum, actions, ctx.config.scale_alignment);
  reward.rotation = reward_rotation(cum, actions);
  reward.depth_inlier =
      reward_dtri(frames, eval3d, ctx.camera, ctx.config.gamma).ratio;
  return reward;
}

}  // namespace wmrl
