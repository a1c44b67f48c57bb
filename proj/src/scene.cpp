#include "wmrl/scene.hpp"

#include <cmath>
#include <limits>

#include "wmrl/random.hpp"

namespace wmrl {

namespace {

// Light direction (travel direction, unit). y is down, so this shines from
// above, slightly right-of and behind the start camera.
const Vec3 kLightDir = Vec3(0.35, 0.80, 0.30).normalized();
constexpr double kAmbient = 0.25;

// Smooth band-limited waves; hard checker patterns alias badly at 32x32 and
// poison photometric alignment between frames.
double ground_wave(double x, double z) {
  const double w1 =
      std::sin(2.0 * M_PI * x / 3.0) * std::sin(2.0 * M_PI * z / 3.0);
  const double w2 = std::sin(2.0 * M_PI * (x + z) / 7.0);
  const double w3 = std::sin(2.0 * M_PI * (x - 0.6 * z) / 4.5);
  return 0.20 * w1 + 0.10 * w2 + 0.10 * w3;
}

struct RayHit {
  double s = std::numeric_limits<double>::infinity();  // z-depth (see below)
  Vec3 normal = Vec3::Zero();
  int box_index = -1;  // -1 = ground plane
  bool hit = false;
};

// Slab test. Returns smallest positive entry parameter or +inf.
double intersect_box(const Vec3& origin, const Vec3& dir, const AxisBox& box,
                     Vec3* normal) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1;
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = box.center[axis] - box.half[axis];
    const double hi = box.center[axis] + box.half[axis];
    if (std::abs(dir[axis]) < 1e-15) {
      if (origin[axis] < lo || origin[axis] > hi) {
        return std::numeric_limits<double>::infinity();
      }
      continue;
    }
    double t0 = (lo - origin[axis]) / dir[axis];
    double t1 = (hi - origin[axis]) / dir[axis];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      near_axis = axis;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::numeric_limits<double>::infinity();
  }
  if (t_near <= 0.0 || near_axis < 0) {
    return std::numeric_limits<double>::infinity();
  }
  if (normal) {
    Vec3 n = Vec3::Zero();
    n[near_axis] = dir[near_axis] > 0.0 ? -1.0 : 1.0;
    *normal = n;
  }
  return t_near;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  RandomStream rng(derive_seed(seed, "scene"));
  Scene scene;
  scene.seed = seed;
  scene.ground_y = params.ground_y;
  scene.ground_albedo = params.ground_albedo;
  scene.background_albedo = params.background_albedo;
  scene.boxes.reserve(params.box_count);
  for (int i = 0; i < params.box_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < params.max_tries_per_box; ++attempt) {
      AxisBox box;
      const double radius =
          rng.uniform(params.place_radius_min, params.place_radius_max);
      const double angle = rng.uniform(-M_PI, M_PI);
      box.half = Vec3(rng.uniform(params.box_half_min, params.box_half_max),
                      rng.uniform(params.box_half_min, params.box_half_max),
                      rng.uniform(params.box_half_min, params.box_half_max));
      // rest the box on the ground plane
      box.center = Vec3(radius * std::sin(angle), params.ground_y - box.half.y(),
                        radius * std::cos(angle));
      box.albedo = rng.uniform(params.albedo_min, params.albedo_max);
      // distance from the origin (camera start) to the box
      const Vec3 clamped = Vec3::Zero().cwiseMax(box.center - box.half)
                               .cwiseMin(box.center + box.half);
      if (clamped.norm() >= params.clearance) {
        scene.boxes.push_back(box);
        placed = true;
        break;
      }
    }
    if (!placed) {
      throw GenerationError("generate_scene: box placement failed after " +
                            std::to_string(params.max_tries_per_box) +
                            " tries");
    }
  }
  for (int i = 0; i < params.backdrop_count; ++i) {
    AxisBox box;
    const double angle = (2.0 * M_PI * i) / params.backdrop_count +
                         rng.uniform(-0.25, 0.25);
    const double radius =
        rng.uniform(params.backdrop_radius_min, params.backdrop_radius_max);
    box.half =
        Vec3(rng.uniform(params.backdrop_half_min, params.backdrop_half_max),
             rng.uniform(params.backdrop_half_min, params.backdrop_half_max),
             rng.uniform(params.backdrop_half_min, params.backdrop_half_max));
    box.center = Vec3(radius * std::sin(angle), params.ground_y - box.half.y(),
                      radius * std::cos(angle));
    box.albedo = rng.uniform(params.albedo_min, params.albedo_max);
    scene.boxes.push_back(box);
  }
  return scene;
}

double surface_albedo(const Scene& scene, const Vec3& point, int box_index) {
  if (box_index < 0) {
    // world-anchored texture, faded out with distance from the trajectory
    // region so the far plane stays band-limited at this resolution
    const double r = std::hypot(point.x(), point.z());
    const double fade = std::clamp((25.0 - r) / 15.0, 0.0, 1.0);
    return scene.ground_albedo *
           (1.0 + fade * ground_wave(point.x(), point.z()));
  }
  const AxisBox& box = scene.boxes[box_index];
  // coarse enough to stay resolvable on the backdrop ring
  const double stripe =
      std::sin(2.0 * M_PI * (point.x() + point.y() + point.z()) / 2.5);
  return box.albedo * (1.0 + 0.20 * stripe);
}

double lambert_shade(const Vec3& normal) {
  return kAmbient + (1.0 - kAmbient) * std::max(0.0, -normal.dot(kLightDir));
}

RayHit trace(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  RayHit best;
  if (dir.y() > 1e-15) {
    const double s = (scene.ground_y - origin.y()) / dir.y();
    if (s > 0.0) {
      best = {s, Vec3(0, -1, 0), -1, true};
    }
  }
  for (int b = 0; b < static_cast<int>(scene.boxes.size()); ++b) {
    Vec3 normal;
    const double s = intersect_box(origin, dir, scene.boxes[b], &normal);
    if (s < best.s) {
      best = {s, normal, b, true};
    }
  }
  return best;
}

double shade_ray(const Scene& scene, const Vec3& origin, const Vec3& dir,
                 const RenderOptions& opts) {
  const RayHit hit = trace(scene, origin, dir);
  if (!hit.hit || hit.s < opts.near_clip || hit.s > opts.far_clip) {
    return scene.background_albedo;
  }
  const Vec3 point = origin + hit.s * dir;
  const double albedo = surface_albedo(scene, point, hit.box_index);
  return std::clamp(albedo * lambert_shade(hit.normal), 0.0, 1.0);
}

Frame raycast(const Scene& scene, const Pose& camera_to_world,
              const CameraIntrinsics& k, const RenderOptions& opts) {
  Frame frame;
  frame.depth = Image::Zero(k.height, k.width);
  frame.intensity = Image::Zero(k.height, k.width);
  const Vec3 origin = camera_to_world.translation;
  // intensity is area-sampled over the pixel footprint (the ground plane is
  // badly undersampled at grazing angles otherwise, which makes point-sampled
  // intensity view-inconsistent); depth stays point-sampled at the pixel
  // center so the reprojection geometry is exact
  constexpr int kSub = 4;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      // unnormalized direction with unit z: the ray parameter is the z-depth
      const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const Vec3 dir = camera_to_world.rotation * dir_cam;
      const RayHit center = trace(scene, origin, dir);
      if (center.hit && center.s >= opts.near_clip &&
          center.s <= opts.far_clip) {
        frame.depth(v, u) = center.s;
      } else {
        frame.depth(v, u) = 0.0;  // no-hit
      }
      double sum = 0.0;
      for (int sv = 0; sv < kSub; ++sv) {
        for (int su = 0; su < kSub; ++su) {
          const double du = (su + 0.5) / kSub - 0.5;
          const double dv = (sv + 0.5) / kSub - 0.5;
          const Vec3 sub_cam((u + du - k.cx) / k.fx, (v + dv - k.cy) / k.fy,
                             1.0);
          sum += shade_ray(scene, origin,
                           camera_to_world.rotation * sub_cam, opts);
        }
      }
      frame.intensity(v, u) = sum / (kSub * kSub);
    }
  }
  return frame;
}

Trajectory generate_trajectory(std::uint64_t seed, const MotionParams& params,
                               int horizon) {
  RandomStream rng(derive_seed(seed, "trajectory"));
  const double speed = rng.uniform(params.speed_min, params.speed_max);
  const double yaw_rate = rng.uniform(params.yaw_rate_min, params.yaw_rate_max);
  const double pitch_phase = rng.uniform(0.0, 2.0 * M_PI);
  const double roll_phase = rng.uniform(0.0, 2.0 * M_PI);

  Trajectory traj;
  traj.poses.reserve(horizon + 1);
  traj.actions.reserve(horizon + 1);
  for (int t = 0; t <= horizon; ++t) {
    const double psi = yaw_rate * t;
    Vec3 position;
    if (std::abs(yaw_rate) > 1e-12) {
      // exact unicycle arc: radius speed / yaw_rate
      position = Vec3(speed / yaw_rate * (1.0 - std::cos(psi)), 0.0,
                      speed / yaw_rate * std::sin(psi));
    } else {
      position = Vec3(0.0, 0.0, speed * t);
    }
    Action6DoF action;
    action.x = position.x();
    action.y = position.y();
    action.z = position.z();
    action.yaw = psi;
    if (t > 0) {
      action.pitch =
          params.pitch_amplitude * std::sin(0.9 * t + pitch_phase);
      action.roll = params.roll_amplitude * std::sin(0.7 * t + roll_phase);
    }
    traj.actions.push_back(action);
    traj.poses.push_back(action_to_pose(action));
  }
  return traj;
}

}  // namespace wmrl
