#include <algorithm>
#include <cmath>

#include "blocktower/common/error.hpp"
#include "blocktower/eval/occlusion.hpp"
#include "blocktower/render.hpp"

namespace blocktower::eval {

std::vector<float> occlude(const float* image, int width, int height, double cx, double cy) {
  const double sigma = kOcclusionSigma * width;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  std::vector<float> out(image, image + 3 * plane);
  for (int y = 0; y < height; ++y) {
    const double dy = y + 0.5 - cy;
    for (int x = 0; x < width; ++x) {
      const double dx = x + 0.5 - cx;
      const float a = static_cast<float>(std::exp(-(dx * dx + dy * dy) * inv));
      const std::size_t p = static_cast<std::size_t>(y) * width + x;
      for (int c = 0; c < 3; ++c) {
        float& v = out[c * plane + p];
        v = (1.0f - a) * v + a * kOcclusionGray;
      }
    }
  }
  return out;
}

double cell_center_x(int i, int width) { return (i + 0.5) * width / kOcclusionGrid; }
double cell_center_y(int j, int height) { return (j + 0.5) * height / kOcclusionGrid; }

Heatmap occlusion_heatmap(const learn::Model<float>& model, const float* image, int jobs) {
  const int w = model.config().width;
  const int h = model.config().height;
  const std::size_t isz = model.image_size();
  constexpr int kCells = kOcclusionGrid * kOcclusionGrid;
  std::vector<float> batch((kCells + 1) * isz);
  std::copy_n(image, isz, batch.begin());
  for (int j = 0; j < kOcclusionGrid; ++j)
    for (int i = 0; i < kOcclusionGrid; ++i) {
      const std::vector<float> occ = occlude(image, w, h, cell_center_x(i, w), cell_center_y(j, h));
      std::copy(occ.begin(), occ.end(), batch.begin() + (1 + j * kOcclusionGrid + i) * isz);
    }
  std::vector<float> probs(kCells + 1);
  model.forward(batch.data(), kCells + 1, probs.data(), nullptr, jobs);
  Heatmap hm;
  hm.base_prob = probs[0];
  hm.delta.resize(kCells);
  for (int k = 0; k < kCells; ++k)
    hm.delta[k] = static_cast<double>(probs[k + 1]) - static_cast<double>(probs[0]);
  return hm;
}

HeatmapExport export_heatmap(const Heatmap& hm) {
  const auto [lo_it, hi_it] = std::minmax_element(hm.delta.begin(), hm.delta.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double span = hi - lo;
  std::vector<uint8_t> px(hm.delta.size());
  for (std::size_t k = 0; k < px.size(); ++k)
    px[k] = span > 0.0 ? static_cast<uint8_t>(std::lround((hm.delta[k] - lo) * 255.0 / span)) : 0;
  HeatmapExport out;
  out.pgm = render::encode_pgm8(kOcclusionGrid, kOcclusionGrid, px);
  out.sidecar["grid"] = kOcclusionGrid;
  out.sidecar["base_prob"] = hm.base_prob;
  out.sidecar["min"] = lo;
  out.sidecar["max"] = hi;
  out.sidecar["value_from_pixel"] = {{"offset", lo}, {"scale", span / 255.0}};
  out.sidecar["values"] = hm.delta;
  return out;
}

std::vector<bool> cells_inside_foreground_box(const uint8_t* mask, int width, int height) {
  int x0 = width, y0 = height, x1 = -1, y1 = -1;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (mask[static_cast<std::size_t>(y) * width + x] != 0) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
      }
  std::vector<bool> inside(kOcclusionGrid * kOcclusionGrid, false);
  if (x1 < 0) return inside;
  for (int j = 0; j < kOcclusionGrid; ++j)
    for (int i = 0; i < kOcclusionGrid; ++i) {
      const double cx = cell_center_x(i, width);
      const double cy = cell_center_y(j, height);
      inside[j * kOcclusionGrid + i] = cx >= x0 && cx <= x1 + 1 && cy >= y0 && cy <= y1 + 1;
    }
  return inside;
}

}  // namespace blocktower::eval
