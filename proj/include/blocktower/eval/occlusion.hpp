#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blocktower/learn/model.hpp"

namespace blocktower::eval {

inline constexpr int kOcclusionGrid = 14;
inline constexpr double kOcclusionSigma = 0.2;  // fraction of image width
inline constexpr float kOcclusionGray = 128.0f / 255.0f;

// Blends a Gaussian gray patch centred at (cx, cy) (pixel units, pixel
// centres at +0.5) into a planar (3, H, W) image:
// out = (1 - a) * in + a * gray, a = exp(-r^2 / (2 sigma^2)), sigma = 0.2 W.
std::vector<float> occlude(const float* image, int width, int height, double cx, double cy);

// Centre of grid cell (i, j): ((i + 0.5) W / 14, (j + 0.5) H / 14).
double cell_center_x(int i, int width);
double cell_center_y(int j, int height);

struct Heatmap {
  double base_prob = 0.0;
  // delta[j * 14 + i] = p_fall(occluded at cell (i, j)) - p_fall(original)
  std::vector<double> delta;

  double at(int i, int j) const { return delta[static_cast<std::size_t>(j) * kOcclusionGrid + i]; }
};

Heatmap occlusion_heatmap(const learn::Model<float>& model, const float* image, int jobs = 1);

// 14x14 8-bit PGM with pixel = round((v - min) * 255 / (max - min)); the
// sidecar records the inverse map value = min + pixel * (max - min) / 255.
struct HeatmapExport {
  std::string pgm;
  nlohmann::ordered_json sidecar;
};
HeatmapExport export_heatmap(const Heatmap& hm);

// Cells whose centres fall inside the bounding box of the mask's foreground
// pixels (pixel extents, inclusive of their full area).
std::vector<bool> cells_inside_foreground_box(const uint8_t* mask, int width, int height);

}  // namespace blocktower::eval
