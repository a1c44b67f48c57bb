// Independent reference implementations used by the test suites. These
// deliberately avoid the library's own geometry/reward code paths: raw
// arithmetic only, so they can serve as oracles for it.
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "wmrl/random.hpp"
#include "wmrl/scene.hpp"

namespace oracle {

// --- quaternions -----------------------------------------------------------

// Shepperd's method, returns (w, x, y, z).
inline std::array<double, 4> quat_from_matrix(const Eigen::Matrix3d& m) {
  std::array<double, 4> q{};
  const double tr = m(0, 0) + m(1, 1) + m(2, 2);
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q[0] = 0.25 * s;
    q[1] = (m(2, 1) - m(1, 2)) / s;
    q[2] = (m(0, 2) - m(2, 0)) / s;
    q[3] = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    q[0] = (m(2, 1) - m(1, 2)) / s;
    q[1] = 0.25 * s;
    q[2] = (m(0, 1) + m(1, 0)) / s;
    q[3] = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    q[0] = (m(0, 2) - m(2, 0)) / s;
    q[1] = (m(0, 1) + m(1, 0)) / s;
    q[2] = 0.25 * s;
    q[3] = (m(1, 2) + m(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    q[0] = (m(1, 0) - m(0, 1)) / s;
    q[1] = (m(0, 2) + m(2, 0)) / s;
    q[2] = (m(1, 2) + m(2, 1)) / s;
    q[3] = 0.25 * s;
  }
  return q;
}

// Geodesic angle through the quaternion double cover.
inline double quat_geodesic(const Eigen::Matrix3d& a,
                            const Eigen::Matrix3d& b) {
  const Eigen::Matrix3d rel = a * b.transpose();
  const auto q = quat_from_matrix(rel);
  const double vec = std::sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
  return 2.0 * std::atan2(vec, std::abs(q[0]));
}

// Uniform random rotation from a normalized Gaussian quaternion.
inline Eigen::Matrix3d random_rotation(wmrl::RandomStream& rng) {
  double w = rng.normal(), x = rng.normal(), y = rng.normal(),
         z = rng.normal();
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  Eigen::Matrix3d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

// --- homogeneous transforms -------------------------------------------------

inline Eigen::Matrix4d homogeneous(const Eigen::Matrix3d& r,
                                   const Eigen::Vector3d& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.block<3, 3>(0, 0) = r;
  m.block<3, 1>(0, 3) = t;
  return m;
}

// --- ray-box intersection (slab test, scalar form) --------------------------

inline bool slab_ray_box(const Eigen::Vector3d& origin,
                         const Eigen::Vector3d& dir,
                         const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                         double* t_entry) {
  double tmin = -1e300, tmax = 1e300;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return false;
      continue;
    }
    double t0 = (lo[a] - origin[a]) / dir[a];
    double t1 = (hi[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  if (tmin <= 0.0) return false;
  *t_entry = tmin;
  return true;
}

// --- brute-force depth temporal reprojection inlier ratio -------------------

// Raw per-pixel recomputation: manual back-projection, manual rigid
// transform, manual projection, inverse-depth bilinear lookup over
// fully-valid neighbourhoods.
inline double dtri_reference(const wmrl::Frame& src, const wmrl::Frame& dst,
                             const Eigen::Matrix3d& rel_rot,
                             const Eigen::Vector3d& rel_trans,
                             const wmrl::CameraIntrinsics& k, double gamma) {
  long inliers = 0, domain = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const double d = src.depth(v, u);
      if (d <= 0.0) continue;
      const double px = d * (u - k.cx) / k.fx;
      const double py = d * (v - k.cy) / k.fy;
      const double qx =
          rel_rot(0, 0) * px + rel_rot(0, 1) * py + rel_rot(0, 2) * d +
          rel_trans[0];
      const double qy =
          rel_rot(1, 0) * px + rel_rot(1, 1) * py + rel_rot(1, 2) * d +
          rel_trans[1];
      const double qz =
          rel_rot(2, 0) * px + rel_rot(2, 1) * py + rel_rot(2, 2) * d +
          rel_trans[2];
      if (qz <= 0.0) continue;
      const double ub = k.fx * qx / qz + k.cx;
      const double vb = k.fy * qy / qz + k.cy;
      if (!(ub >= 0.0 && vb >= 0.0 && ub <= k.width - 1.0 &&
            vb <= k.height - 1.0)) {
        continue;
      }
      int u0 = static_cast<int>(ub);
      int v0 = static_cast<int>(vb);
      if (u0 > k.width - 2) u0 = k.width - 2;
      if (v0 > k.height - 2) v0 = k.height - 2;
      const double d00 = dst.depth(v0, u0), d01 = dst.depth(v0, u0 + 1);
      const double d10 = dst.depth(v0 + 1, u0), d11 = dst.depth(v0 + 1, u0 + 1);
      if (d00 <= 0.0 || d01 <= 0.0 || d10 <= 0.0 || d11 <= 0.0) continue;
      const double fu = ub - u0;
      const double fv = vb - v0;
      const double q = (1 - fv) * ((1 - fu) / d00 + fu / d01) +
                       fv * ((1 - fu) / d10 + fu / d11);
      const double observed = 1.0 / q;
      ++domain;
      if (std::abs(observed - qz) / qz < gamma) ++inliers;
    }
  }
  return domain > 0 ? static_cast<double>(inliers) / domain : 0.0;
}

// --- closed-form unicycle ----------------------------------------------------

inline Eigen::Vector3d unicycle_position(double speed, double yaw_rate,
                                         double t) {
  if (std::abs(yaw_rate) < 1e-12) return {0.0, 0.0, speed * t};
  const double r = speed / yaw_rate;
  return {r * (1.0 - std::cos(yaw_rate * t)), 0.0,
          r * std::sin(yaw_rate * t)};
}

}  // namespace oracle
