#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wmrl/scene.hpp"

namespace wmrl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  int seen_count = 256;
  int counterfactual_count = 64;  // mirrors of the first seen sequences
  int unseen_count = 64;
  int horizon = 12;               // predicted frames; sequences have horizon+1
  CameraIntrinsics camera;
  RenderOptions render;
  SceneParams scene_params;
  MotionParams seen_motion;
  MotionParams unseen_motion{0.12, 0.22, 0.05, 0.14, 0.015, 0.015};
  // scene seeds: seen uses [seen_seed_base, seen_seed_base + seen_count),
  // unseen uses its own base; the ranges must be disjoint.
  std::uint64_t seen_seed_base = 1000;
  std::uint64_t unseen_seed_base = 500000;
  std::uint64_t motion_seed = 1;  // mixed with the split and index
};

struct Dataset {
  DatasetConfig config;
  std::map<std::string, std::vector<Sequence>> splits;  // by regime tag
};

// Renders all three regimes. Counterfactual sequence i shares scene and
// identity with seen sequence i but has every action mirrored and its
// ground-truth frames re-rendered along the mirrored trajectory.
Dataset build_dataset(const DatasetConfig& config);

// Archive layout: <dir>/manifest.json plus one record per sequence under
// <dir>/<split>/seq_<id>.bin. A record is a one-line JSON header followed by
// little-endian float32 depth/intensity planes and float64 pose/action rows.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void write_sequence(const Sequence& seq, const CameraIntrinsics& k,
                    const std::filesystem::path& file);
Sequence load_sequence(const std::filesystem::path& file);

}  // namespace wmrl
