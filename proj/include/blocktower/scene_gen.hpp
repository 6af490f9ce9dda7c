#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blocktower/common/rng.hpp"
#include "blocktower/physics.hpp"

namespace blocktower::scenegen {

struct GenConfig {
  uint64_t master_seed = 20160505;
  // Examples per (tower size, label) cell, summed over both splits.
  int count_per_cell = 1536;
  // Share of each cell reserved for the test split (rounded to nearest).
  double test_fraction = 1.0 / 9.0;
  double offset_range = 0.6;  // fraction of side
  double tilt_range_deg = 0.0;
  std::array<double, 2> camera_scale_range{0.9, 1.1};
  std::array<double, 2> camera_shift_range{-0.3, 0.3};  // fraction of side
  std::array<double, 2> background_range{0.2, 0.9};
  std::array<double, 2> brightness_range{0.7, 1.0};
  physics::PhysicsParams physics;

  int test_count_per_cell() const;
  int train_count_per_cell() const { return count_per_cell - test_count_per_cell(); }

  // Throws Error(kInvalidConfig).
  void validate() const;
};

// JSON form: every field optional, unknown keys rejected with
// Error(kInvalidConfig).
GenConfig gen_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json gen_config_to_json(const GenConfig& cfg);
GenConfig load_gen_config(const std::string& path);

enum class Split { kTrain, kTest };
std::string_view split_name(Split split);

struct RenderParams {
  double camera_scale = 1.0;
  double camera_shift = 0.0;  // world units (m)
  double background_gray = 0.5;
  double brightness = 1.0;
};

struct SceneSample {
  physics::TowerScene scene;
  RenderParams render;
  uint64_t seed = 0;
  bool label_fell = false;
  double margin = 0.0;  // NaN unless the tower is axis-aligned
  // Provenance: global draw index and the split/size it belongs to.
  uint64_t global_index = 0;
  Split split = Split::kTrain;
  uint64_t draw = 0;

  int n_blocks() const { return scene.n_blocks(); }
  std::string id() const;
};

// Global index layout: split in bit 48, tower size in bits 40..47, draw
// number below. Each index owns one seed via derive_seed.
uint64_t global_index(Split split, int n_blocks, uint64_t draw);

// Draws one tower from `seed` and labels it by simulation.
SceneSample sample_tower(uint64_t seed, int n_blocks, const GenConfig& cfg);

// Regenerates the example at a global index.
SceneSample sample_at(uint64_t master_seed, uint64_t global_index, const GenConfig& cfg);

// Rejection-samples each (size, label) cell of each split to its exact
// count. Output order: train then test; within a split sizes 2,3,4; within a
// size fell before stay; within a cell increasing draw number. Throws
// Error(kExhaustedSampling) if a cell cannot be filled within
// 1e6 * count_per_cell draws.
std::vector<SceneSample> generate_balanced(const GenConfig& cfg, int jobs = 1);

}  // namespace blocktower::scenegen
