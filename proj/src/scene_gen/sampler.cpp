#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "blocktower/common/error.hpp"
#include "blocktower/common/parallel.hpp"
#include "blocktower/scene_gen.hpp"

namespace blocktower::scenegen {

std::string_view split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

std::string SceneSample::id() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-n%d-%07llu", std::string(split_name(split)).c_str(),
                n_blocks(), static_cast<unsigned long long>(draw));
  return buf;
}

uint64_t global_index(Split split, int n_blocks, uint64_t draw) {
  return (uint64_t{split == Split::kTest} << 48) | (static_cast<uint64_t>(n_blocks) << 40) | draw;
}

SceneSample sample_tower(uint64_t seed, int n_blocks, const GenConfig& cfg) {
  if (n_blocks < physics::kMinBlocks || n_blocks > physics::kMaxBlocks)
    throw Error(ErrorCode::kInvalidArgument, "n_blocks must be 2..4");
  Pcg32 rng(seed);
  const double side = cfg.physics.side;
  const double h = 0.5 * side;

  SceneSample s;
  s.seed = seed;
  s.scene.params = cfg.physics;

  std::vector<double> xs(n_blocks);
  xs[0] = rng.uniform(cfg.camera_shift_range[0], cfg.camera_shift_range[1]) * side;
  for (int i = 1; i < n_blocks; ++i)
    xs[i] = xs[i - 1] + rng.uniform(-cfg.offset_range, cfg.offset_range) * side;
  std::vector<double> tilts(n_blocks);
  const double tilt = cfg.tilt_range_deg * std::numbers::pi / 180.0;
  for (int i = 0; i < n_blocks; ++i) tilts[i] = tilt > 0.0 ? rng.uniform(-tilt, tilt) : 0.0;

  double y_top = 0.0;
  for (int i = 0; i < n_blocks; ++i) {
    // Half-height of the rotated block's vertical extent.
    const double hh = h * (std::fabs(std::cos(tilts[i])) + std::fabs(std::sin(tilts[i])));
    physics::BlockPose p;
    p.x = xs[i];
    p.y = y_top + hh;
    p.theta = tilts[i];
    y_top = p.y + hh;
    s.scene.blocks.push_back(p);
  }

  s.render.camera_scale = rng.uniform(cfg.camera_scale_range[0], cfg.camera_scale_range[1]);
  s.render.camera_shift = rng.uniform(cfg.camera_shift_range[0], cfg.camera_shift_range[1]) * side;
  s.render.background_gray = rng.uniform(cfg.background_range[0], cfg.background_range[1]);
  s.render.brightness = rng.uniform(cfg.brightness_range[0], cfg.brightness_range[1]);

  std::array<int, 4> classes{1, 2, 3, 4};
  for (int i = 3; i > 0; --i) {
    const auto j = static_cast<int>(rng.bounded(static_cast<uint32_t>(i + 1)));
    std::swap(classes[i], classes[j]);
  }
  s.scene.class_ids.assign(classes.begin(), classes.begin() + n_blocks);

  s.margin = s.scene.axis_aligned() ? physics::static_stability(s.scene).margin
                                    : std::numeric_limits<double>::quiet_NaN();
  const physics::Trajectory traj = physics::simulate(s.scene);
  s.label_fell = physics::fell_label(traj, s.scene.params);
  return s;
}

SceneSample sample_at(uint64_t master_seed, uint64_t index, const GenConfig& cfg) {
  const int n_blocks = static_cast<int>((index >> 40) & 0xFF);
  SceneSample s = sample_tower(derive_seed(master_seed, index), n_blocks, cfg);
  s.global_index = index;
  s.split = ((index >> 48) & 1) ? Split::kTest : Split::kTrain;
  s.draw = index & ((uint64_t{1} << 40) - 1);
  return s;
}

std::vector<SceneSample> generate_balanced(const GenConfig& cfg, int jobs) {
  cfg.validate();
  const uint64_t max_draws = static_cast<uint64_t>(1'000'000) * static_cast<uint64_t>(cfg.count_per_cell);
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, jobs)) * 32;

  std::vector<SceneSample> out;
  for (Split split : {Split::kTrain, Split::kTest}) {
    const int per_cell =
        split == Split::kTrain ? cfg.train_count_per_cell() : cfg.test_count_per_cell();
    if (per_cell == 0) continue;
    for (int n = physics::kMinBlocks; n <= physics::kMaxBlocks; ++n) {
      std::vector<SceneSample> fell;
      std::vector<SceneSample> stay;
      uint64_t next_draw = 0;
      while (static_cast<int>(fell.size()) < per_cell || static_cast<int>(stay.size()) < per_cell) {
        if (next_draw >= max_draws) {
          throw Error(ErrorCode::kExhaustedSampling,
                      "cell n=" + std::to_string(n) + " unfilled after " +
                          std::to_string(max_draws) + " draws");
        }
        const std::size_t count =
            static_cast<std::size_t>(std::min<uint64_t>(chunk, max_draws - next_draw));
        std::vector<SceneSample> batch(count);
        parallel_for(count, jobs, [&](std::size_t k) {
          batch[k] = sample_at(cfg.master_seed, global_index(split, n, next_draw + k), cfg);
        });
        next_draw += count;
        for (SceneSample& s : batch) {
          auto& cell = s.label_fell ? fell : stay;
          if (static_cast<int>(cell.size()) < per_cell) cell.push_back(std::move(s));
        }
      }
      for (auto& s : fell) out.push_back(std::move(s));
      for (auto& s : stay) out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace blocktower::scenegen
