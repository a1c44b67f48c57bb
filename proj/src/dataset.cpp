#include "wmrl/dataset.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "wmrl/random.hpp"

namespace wmrl {

namespace {

using nlohmann::json;

constexpr int kArchiveVersion = 1;

void append_f32_plane(std::string& out, const Image& img) {
  for (int v = 0; v < img.rows(); ++v) {
    for (int u = 0; u < img.cols(); ++u) {
      const float x = static_cast<float>(img(v, u));
      char buf[4];
      std::memcpy(buf, &x, 4);
      out.append(buf, 4);
    }
  }
}

void append_f64(std::string& out, double x) {
  char buf[8];
  std::memcpy(buf, &x, 8);
  out.append(buf, 8);
}

double read_f64(const std::string& data, size_t& off) {
  double x;
  std::memcpy(&x, data.data() + off, 8);
  off += 8;
  return x;
}

float read_f32(const std::string& data, size_t& off) {
  float x;
  std::memcpy(&x, data.data() + off, 4);
  off += 4;
  return x;
}

void atomic_write(const std::filesystem::path& file, const std::string& data) {
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, file);
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open: " + file.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

Sequence render_sequence(int id, const std::string& regime, int ref_id,
                         std::uint64_t scene_seed, std::uint64_t motion_seed,
                         const Trajectory& traj, const DatasetConfig& cfg) {
  Sequence seq;
  seq.id = id;
  seq.regime = regime;
  seq.ref_id = ref_id;
  seq.scene_seed = scene_seed;
  seq.motion_seed = motion_seed;
  seq.poses = traj.poses;
  seq.actions = traj.actions;
  const Scene scene = generate_scene(scene_seed, cfg.scene_params);
  seq.frames.reserve(traj.poses.size());
  for (const Pose& pose : traj.poses) {
    seq.frames.push_back(raycast(scene, pose, cfg.camera, cfg.render));
  }
  return seq;
}

}  // namespace

Dataset build_dataset(const DatasetConfig& cfg) {
  if (cfg.counterfactual_count > cfg.seen_count) {
    throw ConfigError("counterfactual_count exceeds seen_count");
  }
  const std::uint64_t seen_lo = cfg.seen_seed_base;
  const std::uint64_t seen_hi = cfg.seen_seed_base + cfg.seen_count;
  const std::uint64_t unseen_lo = cfg.unseen_seed_base;
  const std::uint64_t unseen_hi = cfg.unseen_seed_base + cfg.unseen_count;
  if (seen_lo < unseen_hi && unseen_lo < seen_hi) {
    throw ConfigError("seen and unseen scene-seed ranges overlap");
  }

  Dataset dataset;
  dataset.config = cfg;
  auto& seen = dataset.splits["seen"];
  auto& counterfactual = dataset.splits["counterfactual"];
  auto& unseen = dataset.splits["unseen"];

  for (int i = 0; i < cfg.seen_count; ++i) {
    const std::uint64_t scene_seed = cfg.seen_seed_base + i;
    const std::uint64_t motion_seed =
        derive_seed(cfg.motion_seed, "motion-seen", i);
    const Trajectory traj =
        generate_trajectory(motion_seed, cfg.seen_motion, cfg.horizon);
    seen.push_back(render_sequence(i, "seen", -1, scene_seed, motion_seed,
                                   traj, cfg));
  }
  for (int i = 0; i < cfg.counterfactual_count; ++i) {
    const Sequence& src = seen[i];
    Trajectory mirrored;
    mirrored.actions.reserve(src.actions.size());
    mirrored.poses.reserve(src.actions.size());
    for (const Action6DoF& a : src.actions) {
      const Action6DoF m = mirror_action(a);
      mirrored.actions.push_back(m);
      mirrored.poses.push_back(action_to_pose(m));
    }
    counterfactual.push_back(render_sequence(i, "counterfactual", src.id,
                                             src.scene_seed, src.motion_seed,
                                             mirrored, cfg));
  }
  for (int i = 0; i < cfg.unseen_count; ++i) {
    const std::uint64_t scene_seed = cfg.unseen_seed_base + i;
    const std::uint64_t motion_seed =
        derive_seed(cfg.motion_seed, "motion-unseen", i);
    const Trajectory traj =
        generate_trajectory(motion_seed, cfg.unseen_motion, cfg.horizon);
    unseen.push_back(render_sequence(i, "unseen", -1, scene_seed, motion_seed,
                                     traj, cfg));
  }
  return dataset;
}

void write_sequence(const Sequence& seq, const CameraIntrinsics& k,
                    const std::filesystem::path& file) {
  json header = {
      {"version", kArchiveVersion},
      {"id", seq.id},
      {"regime", seq.regime},
      {"ref_id", seq.ref_id},
      {"scene_seed", seq.scene_seed},
      {"motion_seed", seq.motion_seed},
      {"horizon", seq.horizon()},
      {"height", k.height},
      {"width", k.width},
      {"fx", k.fx},
      {"fy", k.fy},
      {"cx", k.cx},
      {"cy", k.cy},
  };
  std::string blob = header.dump();
  blob.push_back('\n');
  for (const Frame& frame : seq.frames) {
    append_f32_plane(blob, frame.depth);
    append_f32_plane(blob, frame.intensity);
  }
  for (const Pose& pose : seq.poses) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) append_f64(blob, pose.rotation(r, c));
    for (int i = 0; i < 3; ++i) append_f64(blob, pose.translation[i]);
  }
  for (const Action6DoF& a : seq.actions) {
    append_f64(blob, a.x);
    append_f64(blob, a.y);
    append_f64(blob, a.z);
    append_f64(blob, a.roll);
    append_f64(blob, a.pitch);
    append_f64(blob, a.yaw);
  }
  atomic_write(file, blob);
}

Sequence load_sequence(const std::filesystem::path& file) {
  const std::string data = read_file(file);
  const size_t nl = data.find('\n');
  if (nl == std::string::npos) throw IoError("missing header: " + file.string());
  const json header = json::parse(data.substr(0, nl));
  if (header.at("version").get<int>() != kArchiveVersion) {
    throw IoError("unsupported record version in " + file.string());
  }
  Sequence seq;
  seq.id = header.at("id").get<int>();
  seq.regime = header.at("regime").get<std::string>();
  seq.ref_id = header.at("ref_id").get<int>();
  seq.scene_seed = header.at("scene_seed").get<std::uint64_t>();
  seq.motion_seed = header.at("motion_seed").get<std::uint64_t>();
  const int horizon = header.at("horizon").get<int>();
  const int h = header.at("height").get<int>();
  const int w = header.at("width").get<int>();

  size_t off = nl + 1;
  const size_t need = static_cast<size_t>(horizon + 1) *
                          (2u * h * w * 4u + 12u * 8u + 6u * 8u) +
                      off;
  if (data.size() != need) {
    throw IoError("record size mismatch in " + file.string());
  }
  for (int t = 0; t <= horizon; ++t) {
    Frame frame;
    frame.depth = Image(h, w);
    frame.intensity = Image(h, w);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) frame.depth(v, u) = read_f32(data, off);
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) frame.intensity(v, u) = read_f32(data, off);
    seq.frames.push_back(std::move(frame));
  }
  for (int t = 0; t <= horizon; ++t) {
    Pose pose;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) pose.rotation(r, c) = read_f64(data, off);
    for (int i = 0; i < 3; ++i) pose.translation[i] = read_f64(data, off);
    seq.poses.push_back(pose);
  }
  for (int t = 0; t <= horizon; ++t) {
    Action6DoF a;
    a.x = read_f64(data, off);
    a.y = read_f64(data, off);
    a.z = read_f64(data, off);
    a.roll = read_f64(data, off);
    a.pitch = read_f64(data, off);
    a.yaw = read_f64(data, off);
    seq.actions.push_back(a);
  }
  return seq;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json manifest = {
      {"version", kArchiveVersion},
      {"horizon", dataset.config.horizon},
      {"height", dataset.config.camera.height},
      {"width", dataset.config.camera.width},
      {"fx", dataset.config.camera.fx},
      {"fy", dataset.config.camera.fy},
      {"cx", dataset.config.camera.cx},
      {"cy", dataset.config.camera.cy},
      {"near_clip", dataset.config.render.near_clip},
      {"far_clip", dataset.config.render.far_clip},
      {"sequences", json::array()},
  };
  for (const auto& [split, sequences] : dataset.splits) {
    std::filesystem::create_directories(dir / split);
    for (const Sequence& seq : sequences) {
      char name[32];
      std::snprintf(name, sizeof(name), "seq_%04d.bin", seq.id);
      const auto rel = std::filesystem::path(split) / name;
      write_sequence(seq, dataset.config.camera, dir / rel);
      manifest["sequences"].push_back({{"id", seq.id},
                                       {"regime", split},
                                       {"file", rel.generic_string()},
                                       {"ref_id", seq.ref_id},
                                       {"scene_seed", seq.scene_seed}});
    }
  }
  atomic_write(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  Dataset dataset;
  dataset.config.horizon = manifest.at("horizon").get<int>();
  dataset.config.camera.height = manifest.at("height").get<int>();
  dataset.config.camera.width = manifest.at("width").get<int>();
  dataset.config.camera.fx = manifest.at("fx").get<double>();
  dataset.config.camera.fy = manifest.at("fy").get<double>();
  dataset.config.camera.cx = manifest.at("cx").get<double>();
  dataset.config.camera.cy = manifest.at("cy").get<double>();
  dataset.config.render.near_clip = manifest.at("near_clip").get<double>();
  dataset.config.render.far_clip = manifest.at("far_clip").get<double>();
  for (const auto& entry : manifest.at("sequences")) {
    const auto regime = entry.at("regime").get<std::string>();
    dataset.splits[regime].push_back(
        load_sequence(dir / entry.at("file").get<std::string>()));
  }
  return dataset;
}

}  // namespace wmrl
