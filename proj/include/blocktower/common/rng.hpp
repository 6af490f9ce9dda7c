#pragma once

#include <cstdint>

namespace blocktower {

inline constexpr uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// One SplitMix64 output for the given state (state advanced by the golden
// gamma, then mixed).
constexpr uint64_t splitmix64(uint64_t state) {
  uint64_t z = state + kGoldenGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Per-example seed. A bijection in `index` for a fixed master seed.
constexpr uint64_t derive_seed(uint64_t master_seed, uint64_t index) {
  return splitmix64(master_seed ^ (index * kGoldenGamma));
}

// PCG-XSH-RR 32-bit generator (O'Neill's pcg32 reference seeding).
class Pcg32 {
 public:
  explicit Pcg32(uint64_t seed, uint64_t stream = 0xDA3E39CB94B95BDBULL);

  uint32_t next_u32();
  // Uniform in [0, bound) by rejection; bound > 0.
  uint32_t bounded(uint32_t bound);
  // Uniform double in [0, 1) built from the 53 high bits of two draws.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller (cosine branch only).
  double normal();

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 0;
};

}  // namespace blocktower
