#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "wmrl/dataset.hpp"
#include "wmrl/scene.hpp"

#include "oracles.hpp"

using namespace wmrl;

namespace {

bool scenes_equal(const Scene& a, const Scene& b) {
  if (a.boxes.size() != b.boxes.size()) return false;
  for (size_t i = 0; i < a.boxes.size(); ++i) {
    if (a.boxes[i].center != b.boxes[i].center) return false;
    if (a.boxes[i].half != b.boxes[i].half) return false;
    if (a.boxes[i].albedo != b.boxes[i].albedo) return false;
  }
  return a.ground_y == b.ground_y;
}

// camera looking straight down at the ground plane
Pose looking_down() { return {rot_x(-M_PI / 2), Vec3::Zero()}; }

}  // namespace

TEST_CASE("scene generation is deterministic and honours clearance") {
  SUBCASE("same seed, same scene") {
    CHECK(scenes_equal(generate_scene(7), generate_scene(7)));
  }
  SUBCASE("plane-only scene") {
    SceneParams params;
    params.box_count = 0;
    CHECK(generate_scene(3, params).boxes.empty());
  }
  SUBCASE("clearance invariant over 100 seeds") {
    SceneParams params;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const Scene scene = generate_scene(seed, params);
      CHECK(scene.boxes.size() ==
            static_cast<size_t>(params.box_count + params.backdrop_count));
      for (const AxisBox& box : scene.boxes) {
        const Vec3 closest = Vec3::Zero()
                                 .cwiseMax(box.center - box.half)
                                 .cwiseMin(box.center + box.half);
        CHECK(closest.norm() >= params.clearance);
      }
    }
  }
}

TEST_CASE("raycast of a fronto-parallel plane") {
  Scene scene;
  scene.ground_y = 5.0;
  CameraIntrinsics k;
  const Frame frame = raycast(scene, looking_down(), k);
  // z-depth, not ray length: off-axis pixels see the same depth
  CHECK(frame.depth(static_cast<int>(k.cy), static_cast<int>(k.cx)) ==
        doctest::Approx(5.0).epsilon(1e-12));
  CHECK(frame.depth.minCoeff() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(frame.depth.maxCoeff() == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(frame.intensity.minCoeff() > 0.0);
  CHECK(frame.intensity.maxCoeff() <= 1.0);

  const Pose closer{rot_x(-M_PI / 2), Vec3(0, 1, 0)};
  const Frame nearer = raycast(scene, closer, k);
  CHECK(nearer.depth(16, 16) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("raycast box depths match the slab-test oracle") {
  Scene scene;
  scene.ground_y = 1000.0;  // out of view
  scene.boxes.push_back({Vec3(0.3, 0.1, 5.0), Vec3(0.5, 0.5, 0.5), 0.8});
  CameraIntrinsics k;
  const Pose pose = Pose::identity();
  const Frame frame = raycast(scene, pose, k);
  const Vec3 lo = scene.boxes[0].center - scene.boxes[0].half;
  const Vec3 hi = scene.boxes[0].center + scene.boxes[0].half;
  int hits = 0;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 dir((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double t = 0.0;
      if (oracle::slab_ray_box(Vec3::Zero(), dir, lo, hi, &t)) {
        ++hits;
        CHECK(std::abs(frame.depth(v, u) - t) < 1e-9);
      } else {
        CHECK(frame.depth(v, u) == 0.0);
      }
    }
  }
  CHECK(hits > 0);
}

TEST_CASE("trajectory generation") {
  SUBCASE("zero speed and rates give identity actions") {
    MotionParams still{0, 0, 0, 0, 0, 0};
    const Trajectory traj = generate_trajectory(5, still, 8);
    REQUIRE(traj.actions.size() == 9);
    for (const Action6DoF& a : traj.actions) {
      CHECK(a.x == 0.0);
      CHECK(a.z == 0.0);
      CHECK(a.yaw == 0.0);
      CHECK(a.pitch == 0.0);
    }
  }
  SUBCASE("constant speed dead-reckons along z") {
    MotionParams forward{0.25, 0.25, 0, 0, 0, 0};
    const Trajectory traj = generate_trajectory(6, forward, 10);
    for (int t = 0; t <= 10; ++t) {
      CHECK(traj.actions[t].z == doctest::Approx(0.25 * t).epsilon(1e-12));
      CHECK(traj.actions[t].x == doctest::Approx(0.0));
    }
  }
  SUBCASE("constant yaw rate follows the closed-form arc") {
    MotionParams arc{0.2, 0.2, 0.1, 0.1, 0, 0};
    const Trajectory traj = generate_trajectory(8, arc, 12);
    const double radius = 0.2 / 0.1;
    for (int t = 0; t <= 12; ++t) {
      const Vec3 expected = oracle::unicycle_position(0.2, 0.1, t);
      const Vec3 got(traj.actions[t].x, traj.actions[t].y, traj.actions[t].z);
      CHECK((got - expected).norm() < 1e-12);
      // circle about (radius, 0, 0)
      const double r = std::hypot(got.x() - radius, got.z());
      CHECK(r == doctest::Approx(radius).epsilon(1e-12));
    }
  }
  SUBCASE("deterministic per seed") {
    MotionParams params;
    const Trajectory a = generate_trajectory(42, params, 12);
    const Trajectory b = generate_trajectory(42, params, 12);
    for (int t = 0; t <= 12; ++t) {
      CHECK(a.actions[t].x == b.actions[t].x);
      CHECK(a.actions[t].yaw == b.actions[t].yaw);
    }
  }
}

// The ground-truth DTRI = 1 property: rendering a static scene from two
// poses and reprojecting one frame into the other must agree. Exact on a
// plane-only world (inverse depth is affine in pixel coordinates there).
TEST_CASE("rendering consistency under reprojection") {
  CameraIntrinsics k;
  SUBCASE("plane-only scene is exact") {
    SceneParams params;
    params.box_count = 0;
    const Scene scene = generate_scene(1, params);
    const Pose pose_a = Pose::identity();
    const Pose delta{rot_y(0.05), Vec3(0.05, 0.0, 0.15)};
    const Pose pose_b = compose(pose_a, delta);
    const Frame fa = raycast(scene, pose_a, k);
    const Frame fb = raycast(scene, pose_b, k);
    const Pose point_transform = compose(invert(pose_b), pose_a);
    int checked = 0;
    for (int v = 0; v < k.height; ++v) {
      for (int u = 0; u < k.width; ++u) {
        const double d = fa.depth(v, u);
        if (d <= 0.0) continue;
        const Reprojection re = reproject(Vec2(u, v), d, point_transform, k, k);
        if (!re.valid || re.expected_depth <= 0.0) continue;
        const int u0 = std::min(static_cast<int>(re.pixel.x()), k.width - 2);
        const int v0 = std::min(static_cast<int>(re.pixel.y()), k.height - 2);
        const double d00 = fb.depth(v0, u0), d01 = fb.depth(v0, u0 + 1);
        const double d10 = fb.depth(v0 + 1, u0),
                     d11 = fb.depth(v0 + 1, u0 + 1);
        if (d00 <= 0 || d01 <= 0 || d10 <= 0 || d11 <= 0) continue;
        const double fu = re.pixel.x() - u0, fv = re.pixel.y() - v0;
        const double q = (1 - fv) * ((1 - fu) / d00 + fu / d01) +
                         fv * ((1 - fu) / d10 + fu / d11);
        CHECK(std::abs(1.0 / q - re.expected_depth) / re.expected_depth <
              1e-6);
        ++checked;
      }
    }
    CHECK(checked > 200);
  }
  SUBCASE("box scene agrees away from edges") {
    const Scene scene = generate_scene(2);
    const Pose pose_a = Pose::identity();
    const Pose delta{rot_y(0.04), Vec3(0.0, 0.0, 0.12)};
    const Pose pose_b = compose(pose_a, delta);
    const Frame fa = raycast(scene, pose_a, k);
    const Frame fb = raycast(scene, pose_b, k);
    const double ratio = oracle::dtri_reference(
        fa, fb, invert(delta).rotation, invert(delta).translation, k, 1e-6);
    CHECK(ratio >= 0.9);
  }
}

TEST_CASE("dataset construction and archive roundtrip") {
  DatasetConfig cfg;
  cfg.seen_count = 3;
  cfg.counterfactual_count = 2;
  cfg.unseen_count = 2;
  cfg.horizon = 4;
  const Dataset dataset = build_dataset(cfg);

  SUBCASE("default horizon yields 13 frames") {
    CHECK(DatasetConfig{}.horizon + 1 == 13);
  }
  SUBCASE("counterfactual actions are elementwise mirrors") {
    for (int i = 0; i < cfg.counterfactual_count; ++i) {
      const Sequence& seen = dataset.splits.at("seen")[i];
      const Sequence& cf = dataset.splits.at("counterfactual")[i];
      CHECK(cf.ref_id == seen.id);
      CHECK(cf.scene_seed == seen.scene_seed);
      for (size_t t = 0; t < seen.actions.size(); ++t) {
        const Action6DoF m = mirror_action(seen.actions[t]);
        CHECK(cf.actions[t].x == m.x);
        CHECK(cf.actions[t].yaw == m.yaw);
        CHECK(cf.actions[t].pitch == m.pitch);
      }
    }
  }
  SUBCASE("seed-range overlap is rejected") {
    DatasetConfig bad = cfg;
    bad.unseen_seed_base = bad.seen_seed_base + 1;
    CHECK_THROWS_AS(build_dataset(bad), ConfigError);
  }
  SUBCASE("archive write/read/write is byte-stable") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "wmrl_dataset_test";
    fs::remove_all(dir);
    write_dataset(dataset, dir);
    const Dataset loaded = load_dataset(dir);
    CHECK(loaded.splits.at("seen").size() == 3);
    CHECK(loaded.splits.at("counterfactual").size() == 2);
    CHECK(loaded.config.horizon == 4);

    const fs::path dir2 = fs::temp_directory_path() / "wmrl_dataset_test2";
    fs::remove_all(dir2);
    Dataset copy = loaded;
    copy.config.camera = dataset.config.camera;
    copy.config.render = dataset.config.render;
    write_dataset(copy, dir2);
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), dir);
      std::ifstream a(entry.path(), std::ios::binary);
      std::ifstream b(dir2 / rel, std::ios::binary);
      REQUIRE(b.good());
      const std::string da((std::istreambuf_iterator<char>(a)),
                           std::istreambuf_iterator<char>());
      const std::string db((std::istreambuf_iterator<char>(b)),
                           std::istreambuf_iterator<char>());
      CHECK(da == db);
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
  }
  SUBCASE("poses and actions survive the archive exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "wmrl_dataset_test3";
    fs::remove_all(dir);
    write_dataset(dataset, dir);
    const Dataset loaded = load_dataset(dir);
    const Sequence& a = dataset.splits.at("seen")[1];
    const Sequence& b = loaded.splits.at("seen")[1];
    for (size_t t = 0; t < a.actions.size(); ++t) {
      CHECK(a.actions[t].yaw == b.actions[t].yaw);  // f64, exact
      CHECK((a.poses[t].rotation - b.poses[t].rotation).norm() == 0.0);
    }
    // frames are stored as f32 planes
    CHECK(std::abs(a.frames[0].depth(20, 16) - b.frames[0].depth(20, 16)) <
          1e-6 * std::max(1.0, a.frames[0].depth(20, 16)));
    fs::remove_all(dir);
  }
}
