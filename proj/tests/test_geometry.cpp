#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wmrl/geometry.hpp"
#include "wmrl/random.hpp"

#include "oracles.hpp"

using namespace wmrl;

TEST_CASE("geodesic distance basics") {
  RandomStream rng(11);
  const Mat3 r = oracle::random_rotation(rng);
  CHECK(rot_geodesic(r, r) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rot_geodesic(rot_z(M_PI / 2), Mat3::Identity()) ==
        doctest::Approx(M_PI / 2).epsilon(1e-12));
}

TEST_CASE("geodesic distance matches the quaternion oracle") {
  RandomStream rng(12);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 a = oracle::random_rotation(rng);
    const Mat3 b = oracle::random_rotation(rng);
    const double expected = oracle::quat_geodesic(a, b);
    CHECK(std::abs(rot_geodesic(a, b) - expected) < 1e-9);
  }
}

TEST_CASE("geodesic distance is a metric on sampled triples") {
  RandomStream rng(13);
  for (int i = 0; i < 300; ++i) {
    const Mat3 a = oracle::random_rotation(rng);
    const Mat3 b = oracle::random_rotation(rng);
    const Mat3 c = oracle::random_rotation(rng);
    CHECK(rot_geodesic(a, b) ==
          doctest::Approx(rot_geodesic(b, a)).epsilon(1e-12));
    CHECK(rot_geodesic(a, b) + rot_geodesic(b, c) >=
          rot_geodesic(a, c) - 1e-7);
  }
}

TEST_CASE("exp_so3 closed forms") {
  CHECK((exp_so3(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);
  CHECK((exp_so3(Vec3(0, 0, M_PI / 2)) - rot_z(M_PI / 2)).norm() < 1e-12);
  CHECK((exp_so3(Vec3(0.3, 0, 0)) - rot_x(0.3)).norm() < 1e-12);
}

TEST_CASE("exp/log roundtrip over random axis-angle vectors") {
  RandomStream rng(14);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    axis.normalize();
    const double angle = rng.uniform(0.0, M_PI - 1e-3);
    const Vec3 omega = angle * axis;
    worst = std::max(worst, (log_so3(exp_so3(omega)) - omega).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("log_so3 rejects rotations at the antipode") {
  CHECK_THROWS_AS(log_so3(rot_z(M_PI)), DegenerateRotationError);
  CHECK_THROWS_AS(log_so3(rot_x(M_PI - 1e-9)), DegenerateRotationError);
}

TEST_CASE("pose composition and inversion") {
  RandomStream rng(15);
  const Pose p{oracle::random_rotation(rng), Vec3(0.3, -1.2, 2.0)};
  SUBCASE("identity is neutral") {
    const Pose q = compose(Pose::identity(), p);
    CHECK((q.rotation - p.rotation).norm() < 1e-15);
    CHECK((q.translation - p.translation).norm() < 1e-15);
  }
  SUBCASE("inverse composes to identity") {
    const Pose q = compose(p, invert(p));
    CHECK((q.rotation - Mat3::Identity()).norm() < 1e-9);
    CHECK(q.translation.norm() < 1e-9);
  }
  SUBCASE("matches the homogeneous-matrix product") {
    for (int i = 0; i < 100; ++i) {
      const Pose a{oracle::random_rotation(rng),
                   Vec3(rng.normal(), rng.normal(), rng.normal())};
      const Pose b{oracle::random_rotation(rng),
                   Vec3(rng.normal(), rng.normal(), rng.normal())};
      const Pose ab = compose(a, b);
      const Eigen::Matrix4d expected =
          oracle::homogeneous(a.rotation, a.translation) *
          oracle::homogeneous(b.rotation, b.translation);
      CHECK((ab.rotation - expected.block<3, 3>(0, 0)).norm() < 1e-12);
      CHECK((ab.translation - expected.block<3, 1>(0, 3)).norm() < 1e-12);
    }
  }
}

TEST_CASE("pinhole projection") {
  CameraIntrinsics k;
  SUBCASE("principal point backprojects onto the axis") {
    const Vec3 x = backproject(Vec2(k.cx, k.cy), 2.0, k);
    CHECK((x - Vec3(0, 0, 2)).norm() < 1e-15);
  }
  SUBCASE("direct pinhole arithmetic") {
    CameraIntrinsics wide;
    wide.fx = 32.0;
    wide.cx = 8.0;
    const auto p = project(Vec3(1, 0, 2), wide);
    CHECK(p.pixel.x() == doctest::Approx(24.0).epsilon(1e-12));
    CHECK(p.depth == doctest::Approx(2.0));
  }
  SUBCASE("project/backproject roundtrip over a 16x16 grid") {
    CameraIntrinsics small;
    small.width = 16;
    small.height = 16;
    small.fx = small.fy = 8.0;
    small.cx = small.cy = 7.5;
    double worst = 0.0;
    for (int v = 0; v < 16; ++v) {
      for (int u = 0; u < 16; ++u) {
        const auto p = project(backproject(Vec2(u, v), 3.0, small), small);
        worst = std::max(worst, (p.pixel - Vec2(u, v)).norm());
        worst = std::max(worst, std::abs(p.depth - 3.0));
      }
    }
    CHECK(worst < 1e-9);
  }
  SUBCASE("behind-camera points are rejected") {
    CHECK_THROWS_AS(project(Vec3(0, 0, -1), k), BehindCameraError);
  }
}

TEST_CASE("reprojection operator") {
  CameraIntrinsics k;
  SUBCASE("static camera returns the same pixel") {
    const auto r = reproject(Vec2(9, 21), 4.2, Pose::identity(), k, k);
    CHECK(r.valid);
    CHECK((r.pixel - Vec2(9, 21)).norm() < 1e-12);
    CHECK(r.expected_depth == doctest::Approx(4.2));
  }
  SUBCASE("forward translation against a fronto-parallel plane") {
    // camera moves 1 m toward a plane at 5 m: points sit 1 m closer
    const Pose move{Mat3::Identity(), Vec3(0, 0, -1)};
    for (int v = 0; v < k.height; v += 5) {
      for (int u = 0; u < k.width; u += 5) {
        const auto r = reproject(Vec2(u, v), 5.0, move, k, k);
        CHECK(r.expected_depth == doctest::Approx(4.0).epsilon(1e-12));
      }
    }
  }
  SUBCASE("pure rotation matches an explicit per-pixel transform") {
    const Pose rot{rot_y(0.1), Vec3::Zero()};
    RandomStream rng(16);
    for (int i = 0; i < 200; ++i) {
      const int u = static_cast<int>(rng.integer(k.width));
      const int v = static_cast<int>(rng.integer(k.height));
      const double d = rng.uniform(1.0, 20.0);
      const auto r = reproject(Vec2(u, v), d, rot, k, k);
      const Vec3 x(d * (u - k.cx) / k.fx, d * (v - k.cy) / k.fy, d);
      const Vec3 moved = rot_y(0.1) * x;
      CHECK(r.expected_depth == doctest::Approx(moved.z()).epsilon(1e-12));
      if (r.valid) {
        CHECK(r.pixel.x() ==
              doctest::Approx(k.fx * moved.x() / moved.z() + k.cx)
                  .epsilon(1e-12));
      }
    }
  }
  SUBCASE("behind-camera and out-of-bounds are flagged invalid") {
    const Pose back{Mat3::Identity(), Vec3(0, 0, -10)};
    CHECK_FALSE(reproject(Vec2(16, 16), 5.0, back, k, k).valid);
    const Pose shove{Mat3::Identity(), Vec3(50, 0, 0)};
    CHECK_FALSE(reproject(Vec2(16, 16), 5.0, shove, k, k).valid);
  }
}

TEST_CASE("counterfactual action mirroring") {
  SUBCASE("reference example") {
    const Action6DoF a{1.0, 0.2, 3.0, 0.1, 0.05, -0.4};
    const Action6DoF m = mirror_action(a);
    CHECK(m.x == doctest::Approx(-1.0));
    CHECK(m.y == doctest::Approx(0.2));
    CHECK(m.z == doctest::Approx(3.0));
    CHECK(m.roll == doctest::Approx(0.1));
    CHECK(m.pitch == doctest::Approx(-0.05));
    CHECK(m.yaw == doctest::Approx(0.4));
  }
  SUBCASE("zero action is a fixed point") {
    const Action6DoF m = mirror_action(Action6DoF{});
    CHECK(m.x == 0.0);
    CHECK(m.yaw == 0.0);
  }
  SUBCASE("exact involution and translation-norm preservation") {
    RandomStream rng(17);
    for (int i = 0; i < 1000; ++i) {
      const Action6DoF a{rng.normal(), rng.normal(), rng.normal(),
                         rng.normal(), rng.normal(), rng.normal()};
      const Action6DoF mm = mirror_action(mirror_action(a));
      CHECK(mm.x == a.x);
      CHECK(mm.y == a.y);
      CHECK(mm.z == a.z);
      CHECK(mm.roll == a.roll);
      CHECK(mm.pitch == a.pitch);
      CHECK(mm.yaw == a.yaw);
      const Action6DoF m = mirror_action(a);
      CHECK(m.x * m.x + m.y * m.y + m.z * m.z ==
            doctest::Approx(a.x * a.x + a.y * a.y + a.z * a.z));
    }
  }
}

TEST_CASE("euler/pose roundtrip away from gimbal lock") {
  RandomStream rng(18);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Action6DoF a;
    a.x = rng.normal();
    a.y = rng.normal();
    a.z = rng.normal();
    a.roll = rng.uniform(-M_PI / 2 + 0.05, M_PI / 2 - 0.05);
    a.pitch = rng.uniform(-M_PI / 2 + 0.05, M_PI / 2 - 0.05);
    a.yaw = rng.uniform(-M_PI / 2 + 0.05, M_PI / 2 - 0.05);
    const Action6DoF back = pose_to_action(action_to_pose(a));
    worst = std::max({worst, std::abs(back.roll - a.roll),
                      std::abs(back.pitch - a.pitch),
                      std::abs(back.yaw - a.yaw), std::abs(back.x - a.x)});
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("rotation validity checks") {
  RandomStream rng(19);
  const Mat3 r = oracle::random_rotation(rng);
  CHECK(is_rotation(r, 1e-9));
  Mat3 bad = r;
  bad(0, 0) += 1e-3;
  CHECK_FALSE(is_rotation(bad, 1e-9));
  CHECK_FALSE(is_rotation(-Mat3::Identity(), 1e-9));  // det = -1
}
