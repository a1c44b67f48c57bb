#pragma once

#include <vector>

#include "wmrl/scene.hpp"

namespace wmrl {

struct PoseEstimate {
  Pose relative;      // pose of the second camera in the first camera's frame
  double confidence;  // inlier fraction at convergence; 0 marks failure
};

// relative poses for consecutive pairs (frames[t], frames[t+1]); depth maps
// are the frames' own depth channel, so only poses are produced here
struct EvalOutput3D {
  std::vector<PoseEstimate> relatives;
  double scale = 1.0;

  bool all_ok() const {
    for (const auto& r : relatives)
      if (r.confidence <= 0.0) return false;
    return !relatives.empty();
  }
};

struct Evaluator3DConfig {
  double huber_intensity = 0.1;  // intensity units
  double huber_depth = 0.2;      // meters
  int max_iterations = 30;
  double gradient_tol = 1e-8;
  double step_tol = 1e-10;
  double accept_step_tol = 1e-4;  // worst final step still counted converged
  int pyramid_levels = 3;
  double min_valid_fraction = 0.25;
  double min_eigen_ratio = 1e-9;  // rank guard on the 6x6 normal matrix
  double occlusion_band = 0.5;    // meters; see the discontinuity gate
};

// Frozen direct image/depth alignment over SE(3). Deterministic; safe for
// concurrent use once constructed.
class Evaluator3D {
 public:
  explicit Evaluator3D(const Evaluator3DConfig& config = {})
      : config_(config) {}

  PoseEstimate estimate_relative_pose(const Frame& a, const Frame& b,
                                      const CameraIntrinsics& k,
                                      const Pose& init = {}) const;

  // Chains consecutive pairs, each initialized at identity.
  EvalOutput3D evaluate_rollout(const std::vector<Frame>& frames,
                                const CameraIntrinsics& k) const;

  const Evaluator3DConfig& config() const { return config_; }

 private:
  Evaluator3DConfig config_;
};

struct VideoScores {
  double visual = 0.0;  // s_vis in [0,1]
  double motion = 0.0;  // s_mot in [0,1]
};

struct VideoEvaluatorConfig {
  // Frozen constants. reference_sharpness is the mean squared Laplacian
  // response of ground-truth renders under the default world, measured once
  // over 100 sequences and kept fixed.
  double lambda_visual = 3.0;
  double lambda_motion = 8.0;
  double reference_sharpness = 0.0175;
};

// Sequence-level visual / motion quality proxy. Higher is better; both
// scores live in [0,1].
class VideoEvaluator {
 public:
  explicit VideoEvaluator(const VideoEvaluatorConfig& config = {})
      : config_(config) {}

  VideoScores evaluate(const std::vector<Frame>& frames) const;

  // exposed for calibration and tests
  static double sharpness_statistic(const std::vector<Frame>& frames);
  static double motion_statistic(const std::vector<Frame>& frames);

  const VideoEvaluatorConfig& config() const { return config_; }

 private:
  VideoEvaluatorConfig config_;
};

}  // namespace wmrl
