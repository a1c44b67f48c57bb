#include "wmrl/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace wmrl {

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

bool is_rotation(const Mat3& r, double tol) {
  const Mat3 rtr = r.transpose() * r;
  if ((rtr - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

double rot_geodesic(const Mat3& a, const Mat3& b) {
  // arccos((tr - 1)/2) evaluated in atan2 form: the skew part supplies
  // sin(theta), which keeps the identity case exact to roundoff instead of
  // sqrt(eps). Arguments are clamped implicitly by atan2.
  const Mat3 m = a * b.transpose();
  const double cos_theta = std::clamp((m.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 vee(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const double sin_theta = 0.5 * vee.norm();
  return std::atan2(sin_theta, cos_theta);
}

Mat3 exp_so3(const Vec3& omega) {
  const double theta = omega.norm();
  Mat3 hat;
  hat << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(),
      omega.x(), 0;
  double a = 0.0, b = 0.0;
  if (theta < 1e-8) {
    // Taylor: sin t / t ~ 1 - t^2/6, (1 - cos t)/t^2 ~ 1/2 - t^2/24
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0;
    b = 0.5 - t2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Mat3::Identity() + a * hat + b * (hat * hat);
}

Vec3 log_so3(const Mat3& r) {
  const double arg = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const double theta = std::acos(arg);
  if (theta > M_PI - 1e-6) {
    throw DegenerateRotationError("log_so3: rotation angle too close to pi");
  }
  Vec3 vee(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    // theta/(2 sin theta) ~ 1/2 + theta^2/12
    return (0.5 + theta * theta / 12.0) * vee;
  }
  return theta / (2.0 * std::sin(theta)) * vee;
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose invert(const Pose& a) {
  const Mat3 rt = a.rotation.transpose();
  return {rt, -(rt * a.translation)};
}

Pose action_to_pose(const Action6DoF& a) {
  return {rot_y(a.yaw) * rot_x(a.pitch) * rot_z(a.roll), Vec3(a.x, a.y, a.z)};
}

Action6DoF pose_to_action(const Pose& p) {
  // R = Ry(yaw) Rx(pitch) Rz(roll):
  //   R(1,2) = -sin(pitch)
  //   R(1,0) = cos(pitch) sin(roll),  R(1,1) = cos(pitch) cos(roll)
  //   R(0,2) = sin(yaw) cos(pitch),   R(2,2) = cos(yaw) cos(pitch)
  const Mat3& r = p.rotation;
  Action6DoF a;
  a.pitch = std::asin(std::clamp(-r(1, 2), -1.0, 1.0));
  a.roll = std::atan2(r(1, 0), r(1, 1));
  a.yaw = std::atan2(r(0, 2), r(2, 2));
  a.x = p.translation.x();
  a.y = p.translation.y();
  a.z = p.translation.z();
  return a;
}

Action6DoF mirror_action(const Action6DoF& a) {
  return {-a.x, a.y, a.z, a.roll, -a.pitch, -a.yaw};
}

Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& k) {
  return {depth * (pixel.x() - k.cx) / k.fx, depth * (pixel.y() - k.cy) / k.fy,
          depth};
}

Projection project(const Vec3& point, const CameraIntrinsics& k) {
  if (point.z() <= 0.0) {
    throw BehindCameraError("project: point behind camera");
  }
  return {{k.fx * point.x() / point.z() + k.cx,
           k.fy * point.y() / point.z() + k.cy},
          point.z()};
}

Reprojection reproject(const Vec2& pixel, double depth,
                       const Pose& point_transform,
                       const CameraIntrinsics& k_source,
                       const CameraIntrinsics& k_target) {
  const Vec3 moved = point_transform * backproject(pixel, depth, k_source);
  if (moved.z() <= 0.0) {
    return {Vec2::Zero(), moved.z(), false};
  }
  const Vec2 target(k_target.fx * moved.x() / moved.z() + k_target.cx,
                    k_target.fy * moved.y() / moved.z() + k_target.cy);
  const bool in_bounds = target.x() >= 0.0 && target.y() >= 0.0 &&
                         target.x() <= k_target.width - 1.0 &&
                         target.y() <= k_target.height - 1.0;
  return {target, moved.z(), in_bounds};
}

}  // namespace wmrl
