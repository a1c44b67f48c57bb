#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "wmrl/geometry.hpp"

namespace wmrl {

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// row = v (image y), col = u (image x)
using Image = Eigen::MatrixXd;

// Per-pixel z-depth in meters (0 encodes no-hit) and intensity in [0,1].
struct Frame {
  Image depth;
  Image intensity;

  int height() const { return static_cast<int>(depth.rows()); }
  int width() const { return static_cast<int>(depth.cols()); }
};

struct AxisBox {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Ones();
  double albedo = 0.7;
};

// World frame = conditioning camera frame (x right, y down, z forward), so
// the ground plane sits at positive y below the camera.
struct Scene {
  double ground_y = 1.2;
  double ground_albedo = 0.75;
  double background_albedo = 0.85;
  std::vector<AxisBox> boxes;
  std::uint64_t seed = 0;
};

struct SceneParams {
  int box_count = 10;
  double box_half_min = 0.3;
  double box_half_max = 1.2;
  double place_radius_min = 3.0;   // keeps the trajectory region clear
  double place_radius_max = 12.0;
  double clearance = 1.5;          // around the camera start at the origin
  double albedo_min = 0.3;
  double albedo_max = 0.95;
  double ground_y = 1.2;
  double ground_albedo = 0.75;
  double background_albedo = 0.85;
  int max_tries_per_box = 64;
  // ring of large boxes surrounding the trajectory region; they give the
  // odometry textured structure at a second depth, which pins yaw against
  // lateral translation
  int backdrop_count = 6;
  double backdrop_radius_min = 13.0;
  double backdrop_radius_max = 18.0;
  double backdrop_half_min = 2.0;
  double backdrop_half_max = 4.0;
};

Scene generate_scene(std::uint64_t seed, const SceneParams& params = {});

struct RenderOptions {
  double near_clip = 0.1;
  double far_clip = 50.0;
};

// pose maps camera coordinates to world coordinates
Frame raycast(const Scene& scene, const Pose& camera_to_world,
              const CameraIntrinsics& k, const RenderOptions& opts = {});

// Albedo at a surface point (ground checker / box face pattern) and the fixed
// directional light live here so oracles can reproduce shading exactly.
double surface_albedo(const Scene& scene, const Vec3& point, int box_index);
double lambert_shade(const Vec3& normal);

struct MotionParams {
  double speed_min = 0.10, speed_max = 0.18;          // m / frame
  double yaw_rate_min = 0.02, yaw_rate_max = 0.10;    // rad / frame
  double pitch_amplitude = 0.01;                      // rad
  double roll_amplitude = 0.01;                       // rad
};

struct Trajectory {
  std::vector<Pose> poses;          // size horizon+1, poses[0] = identity
  std::vector<Action6DoF> actions;  // same length, actions[0] = zeros
};

// Closed-form unicycle arc (constant speed and yaw rate per trajectory,
// drawn from the configured ranges) with small sinusoidal pitch/roll noise.
Trajectory generate_trajectory(std::uint64_t seed, const MotionParams& params,
                               int horizon);

struct Sequence {
  int id = 0;
  std::string regime;               // seen | counterfactual | unseen
  int ref_id = -1;                  // seen counterpart for counterfactual
  std::uint64_t scene_seed = 0;
  std::uint64_t motion_seed = 0;
  std::vector<Frame> frames;        // horizon+1 frames, frames[0] conditions
  std::vector<Pose> poses;
  std::vector<Action6DoF> actions;

  int horizon() const { return static_cast<int>(actions.size()) - 1; }
};

}  // namespace wmrl
