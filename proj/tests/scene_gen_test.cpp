#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "blocktower/common/error.hpp"
#include "blocktower/common/rng.hpp"
#include "blocktower/physics.hpp"
#include "blocktower/scene_gen.hpp"
#include "test_util.hpp"

using namespace blocktower;
using namespace blocktower::scenegen;

TEST(DeriveSeed, ZeroZeroIsFirstSplitMixOutput) {
  // First output of the reference SplitMix64 generator seeded with 0.
  EXPECT_EQ(derive_seed(0, 0), 0xE220A8397B1DCDAFULL);
}

TEST(DeriveSeed, ReferenceMixer) {
  auto reference = [](uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  for (uint64_t s : {1ULL, 42ULL, 0xFFFFFFFFFFFFFFFFULL})
    for (uint64_t i : {0ULL, 1ULL, 977ULL})
      EXPECT_EQ(derive_seed(s, i), reference(s ^ (i * 0x9E3779B97F4A7C15ULL)));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(DeriveSeed, NoCollisionsOverAMillionIndices) {
  std::vector<uint64_t> v(1'000'000);
  for (uint64_t i = 0; i < v.size(); ++i) v[i] = derive_seed(20160505, i);
  for (uint64_t i = 0; i + 1 < v.size(); ++i) ASSERT_NE(v[i], v[i + 1]);
  std::sort(v.begin(), v.end());
  EXPECT_EQ(std::adjacent_find(v.begin(), v.end()), v.end());
}

TEST(Pcg, ReferenceSequence) {
  // pcg32 demo: seed 42, stream 54.
  Pcg32 rng(42, 54);
  const uint32_t expected[] = {0xa15c02b7, 0x7b47f409, 0xba1d3330, 0x83d2f293, 0xbfa4784b, 0xcbed606e};
  for (uint32_t e : expected) EXPECT_EQ(rng.next_u32(), e);
}

TEST(Pcg, UniformRangeAndNormalMoments) {
  Pcg32 rng(3);
  double sum = 0, sq = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / 1e5, 0.0, 0.02);
  EXPECT_NEAR(sq / 1e5, 1.0, 0.02);
}

TEST(SampleTower, ZeroOffsetIsAlignedAndStable) {
  GenConfig cfg;
  cfg.offset_range = 0.0;
  for (uint64_t seed = 0; seed < 20; ++seed)
    for (int n = 2; n <= 4; ++n) {
      const auto s = sample_tower(seed, n, cfg);
      for (int i = 1; i < n; ++i) EXPECT_EQ(s.scene.blocks[i].x, s.scene.blocks[0].x);
      EXPECT_FALSE(s.label_fell);
      EXPECT_GT(s.margin, 0.0);
    }
}

TEST(SampleTower, Deterministic) {
  GenConfig cfg;
  const auto a = sample_tower(1234, 4, cfg);
  const auto b = sample_tower(1234, 4, cfg);
  ASSERT_EQ(a.scene.n_blocks(), 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(a.scene.blocks[i].x, b.scene.blocks[i].x);
    EXPECT_EQ(a.scene.class_ids[i], b.scene.class_ids[i]);
  }
  EXPECT_EQ(a.label_fell, b.label_fell);
  EXPECT_EQ(a.render.camera_scale, b.render.camera_scale);
  EXPECT_EQ(a.render.background_gray, b.render.background_gray);
}

TEST(SampleTower, FieldsWithinConfiguredRanges) {
  GenConfig cfg;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    const auto s = sample_tower(derive_seed(9, seed), 3, cfg);
    std::set<int> ids(s.scene.class_ids.begin(), s.scene.class_ids.end());
    EXPECT_EQ(ids.size(), 3u);
    for (int id : ids) EXPECT_TRUE(id >= 1 && id <= 4);
    for (int i = 1; i < 3; ++i)
      EXPECT_LE(std::abs(s.scene.blocks[i].x - s.scene.blocks[i - 1].x), cfg.offset_range + 1e-12);
    EXPECT_GE(s.render.camera_scale, 0.9);
    EXPECT_LE(s.render.camera_scale, 1.1);
    EXPECT_GE(s.render.background_gray, 0.2);
    EXPECT_LE(s.render.background_gray, 0.9);
    EXPECT_GE(s.render.brightness, 0.7);
    EXPECT_LE(s.render.brightness, 1.0);
    EXPECT_LE(std::abs(s.scene.blocks[0].x), 0.3 + 1e-12);
    const auto traj = physics::simulate(s.scene);
    EXPECT_EQ(s.label_fell, physics::fell_label(traj, s.scene.params));
  }
}

// A two-block tower tips iff |dx| > side / 2, so with dx ~ U(-0.6, 0.6) the
// fall rate is 0.1 / 0.6 = 1/6.
TEST(SampleTower, TwoBlockFallRateMatchesGeometry) {
  GenConfig cfg;
  int fell = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) fell += sample_tower(derive_seed(77, i), 2, cfg).label_fell;
  const double rate = static_cast<double>(fell) / n;
  const double sd = std::sqrt(rate * (1 - rate) / n);
  EXPECT_NEAR(rate, 1.0 / 6.0, 4 * sd);
  EXPECT_GE(n - fell, n / 5);
}

TEST(GenerateBalanced, ExactCellCounts) {
  GenConfig cfg;
  cfg.count_per_cell = 4;
  const auto samples = generate_balanced(cfg);
  ASSERT_EQ(samples.size(), 24u);
  std::map<std::pair<int, bool>, int> cells;
  for (const auto& s : samples) cells[{s.n_blocks(), s.label_fell}]++;
  EXPECT_EQ(cells.size(), 6u);
  for (const auto& [k, v] : cells) EXPECT_EQ(v, 4);
}

TEST(GenerateBalanced, SplitsOrderAndReproducibility) {
  GenConfig cfg;
  cfg.count_per_cell = 18;
  const auto a = generate_balanced(cfg);
  const auto b = generate_balanced(cfg, 3);
  ASSERT_EQ(a.size(), b.size());
  ASSERT_EQ(a.size(), 108u);
  std::map<std::tuple<Split, int, bool>, int> cells;
  std::set<uint64_t> train_seeds, test_seeds;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id(), b[i].id());
    EXPECT_EQ(a[i].seed, b[i].seed);
    cells[{a[i].split, a[i].n_blocks(), a[i].label_fell}]++;
    (a[i].split == Split::kTrain ? train_seeds : test_seeds).insert(a[i].seed);
    if (i > 0) {
      const auto& p = a[i - 1];
      const auto key = [](const SceneSample& s) {
        return std::make_tuple(s.split == Split::kTest, s.n_blocks(), !s.label_fell, s.draw);
      };
      EXPECT_LT(key(p), key(a[i]));
    }
    const auto again = sample_at(cfg.master_seed, a[i].global_index, cfg);
    EXPECT_EQ(again.label_fell, a[i].label_fell);
    EXPECT_EQ(again.scene.blocks.back().x, a[i].scene.blocks.back().x);
  }
  for (int n = 2; n <= 4; ++n)
    for (bool f : {false, true}) {
      EXPECT_EQ((cells[{Split::kTrain, n, f}]), 16);
      EXPECT_EQ((cells[{Split::kTest, n, f}]), 2);
    }
  for (uint64_t s : test_seeds) EXPECT_FALSE(train_seeds.count(s));
}

TEST(GenConfigJson, RoundTripAndUnknownKeys) {
  GenConfig cfg;
  cfg.count_per_cell = 7;
  cfg.master_seed = 99;
  const auto j = gen_config_to_json(cfg);
  const auto back = gen_config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(gen_config_to_json(back).dump(), j.dump());
  EXPECT_ERROR_CODE(gen_config_from_json(nlohmann::json{{"bogus", 1}}), kInvalidConfig);
  EXPECT_ERROR_CODE(gen_config_from_json(nlohmann::json{{"offset_range", 1.5}}), kInvalidConfig);
  EXPECT_ERROR_CODE(gen_config_from_json(nlohmann::json{{"count_per_cell", 0}}), kInvalidConfig);
  EXPECT_EQ(gen_config_from_json(nlohmann::json::object()).count_per_cell, GenConfig{}.count_per_cell);
}

TEST(GenConfig, DefaultSplitCounts) {
  GenConfig cfg;
  EXPECT_EQ(cfg.train_count_per_cell() * 6, 8190);
  EXPECT_EQ(cfg.test_count_per_cell() * 6, 1026);
}
