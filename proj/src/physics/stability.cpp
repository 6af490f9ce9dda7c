#include <algorithm>
#include <cmath>
#include <limits>

#include "blocktower/common/error.hpp"
#include "blocktower/physics.hpp"

namespace blocktower::physics {

StabilityReport static_stability(const TowerScene& scene) {
  for (const BlockPose& b : scene.blocks) {
    if (std::fabs(b.theta) > 1e-9)
      throw Error(ErrorCode::kNonAxisAligned, "static stability needs level blocks");
  }
  const int n = scene.n_blocks();
  if (n < 1) throw Error(ErrorCode::kInvalidScene, "empty tower");
  const double h = 0.5 * scene.params.side;

  StabilityReport report;
  report.margin = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    InterfaceSupport s;
    s.index = k;
    if (k == 0) {
      s.lo = scene.blocks[0].x - h;
      s.hi = scene.blocks[0].x + h;
    } else {
      const double below = scene.blocks[k - 1].x;
      const double above = scene.blocks[k].x;
      s.lo = std::max(below, above) - h;
      s.hi = std::min(below, above) + h;
    }
    double sum = 0.0;
    for (int i = k; i < n; ++i) sum += scene.blocks[i].x;
    s.com = sum / static_cast<double>(n - k);
    s.overlapping = s.hi > s.lo;
    if (s.overlapping) {
      s.margin = std::min(s.com - s.lo, s.hi - s.com);
    } else {
      s.margin = s.hi - s.lo;
      report.any_no_overlap = true;
    }
    report.margin = std::min(report.margin, s.margin);
    report.per_interface.push_back(s);
  }
  return report;
}

}  // namespace blocktower::physics
