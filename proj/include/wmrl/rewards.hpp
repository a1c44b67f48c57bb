#pragma once

#include <optional>
#include <vector>

#include "wmrl/evaluator.hpp"

namespace wmrl {

struct RewardVector {
  double translation = 0.0;  // <= 0, -(mean squared error + final squared)
  double rotation = 0.0;     // <= 0, -sum of geodesic deviations
  double depth_inlier = 0.0; // in [0,1]
  double video = 0.0;        // in [0,1]
  bool failed = false;       // 3D evaluator failed on some pair
};

struct RewardConfig {
  double gamma = 0.0103;  // relative-depth inlier threshold
  double alpha = 0.5;     // visual weight
  double beta = 0.5;      // motion weight
  bool scale_alignment = false;
};

// Relative pose chain composed into absolute poses w.r.t. the conditioning
// frame; absolute[t] corresponds to action t (1-based like the actions).
struct CumulativePoses {
  std::vector<Pose> absolute;
  bool ok = true;
};
CumulativePoses accumulate_relatives(const EvalOutput3D& eval3d);

// Least-squares scale minimizing sum ||s * est - commanded||^2 (closed form).
double align_scale(const CumulativePoses& cum,
                   const std::vector<Action6DoF>& actions);

// actions holds a_0..a_T with a_0 = identity; timesteps 1..T are evaluated.
double reward_translation(const CumulativePoses& cum,
                          const std::vector<Action6DoF>& actions,
                          bool scale_alignment = false);
double reward_rotation(const CumulativePoses& cum,
                       const std::vector<Action6DoF>& actions);

struct DtriResult {
  double ratio = 0.0;                // mean over consecutive pairs
  std::vector<double> per_pair;
  std::vector<bool> pair_empty;      // pair had an empty inlier domain
};

// Depth temporal reprojection inlier ratio over consecutive frame pairs of
// (conditioning frame, rollout...). Depth maps come straight from the
// frames' depth channel; the relative motion comes from the evaluator.
// Subpixel lookups are bilinear in inverse depth over fully-valid
// neighbourhoods (exact on planar surfaces); pixels with fewer than four
// valid neighbours leave the domain.
DtriResult reward_dtri(const std::vector<Frame>& frames,
                       const EvalOutput3D& eval3d, const CameraIntrinsics& k,
                       double gamma);

double reward_video(const VideoScores& scores, double alpha, double beta);

struct RewardContext {
  const Evaluator3D* evaluator3d = nullptr;
  const VideoEvaluator* video = nullptr;
  CameraIntrinsics camera;
  RewardConfig config;
};

// frames = conditioning frame followed by the rollout (T+1 frames);
// actions = a_0..a_T. Runs both evaluators once.
RewardVector evaluate_all(const std::vector<Frame>& frames,
                          const std::vector<Action6DoF>& actions,
                          const RewardContext& ctx);

}  // namespace wmrl
