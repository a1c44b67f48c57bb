#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace wmrl {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec2 = Eigen::Vector2d;

struct DegenerateRotationError : std::domain_error {
  using std::domain_error::domain_error;
};
struct BehindCameraError : std::domain_error {
  using std::domain_error::domain_error;
};

// Camera convention throughout: x right, y down, z forward.

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

bool is_rotation(const Mat3& r, double tol = 1e-9);

// Geodesic distance on SO(3): arccos((tr(a b^T) - 1) / 2), argument clamped
// to [-1, 1] to absorb roundoff. Result in [0, pi].
double rot_geodesic(const Mat3& a, const Mat3& b);

// Rodrigues exponential and its inverse. log_so3 throws
// DegenerateRotationError for angles within 1e-6 of pi.
Mat3 exp_so3(const Vec3& omega);
Vec3 log_so3(const Mat3& r);

// Rigid transform, p_out = R p + t.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
};

Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& a);

// 6-DoF action: translation in meters, intrinsic yaw-pitch-roll in radians.
// Actions are absolute poses with respect to the conditioning camera frame;
// the rotation factorization is R = Ry(yaw) Rx(pitch) Rz(roll).
struct Action6DoF {
  double x = 0.0, y = 0.0, z = 0.0;
  double roll = 0.0, pitch = 0.0, yaw = 0.0;
};

Pose action_to_pose(const Action6DoF& a);
Action6DoF pose_to_action(const Pose& p);

// Left-right counterfactual mirroring: (x,y,z,roll,pitch,yaw) ->
// (-x, y, z, roll, -pitch, -yaw). Involutive.
Action6DoF mirror_action(const Action6DoF& a);

struct CameraIntrinsics {
  double fx = 16.0, fy = 16.0;
  double cx = 15.5, cy = 15.5;
  int width = 32, height = 32;
};

// Pixel (u,v) with z-depth d -> camera-frame point.
Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& k);

struct Projection {
  Vec2 pixel;
  double depth;  // z-depth
};

// Camera-frame point -> pixel. Throws BehindCameraError if z <= 0.
Projection project(const Vec3& point, const CameraIntrinsics& k);

struct Reprojection {
  Vec2 pixel;            // subpixel correspondence in the target frame
  double expected_depth; // z after the rigid transform
  bool valid;            // in-bounds and in front of the target camera
};

// The reprojection operator: back-project (u,v,depth) in the source camera,
// apply `point_transform` (source-camera coordinates -> target-camera
// coordinates), project into the target camera. Out-of-bounds or
// behind-camera results are flagged invalid rather than thrown.
Reprojection reproject(const Vec2& pixel, double depth,
                       const Pose& point_transform,
                       const CameraIntrinsics& k_source,
                       const CameraIntrinsics& k_target);

}  // namespace wmrl
