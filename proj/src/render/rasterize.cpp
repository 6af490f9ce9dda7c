#include <cmath>

#include "blocktower/common/error.hpp"
#include "blocktower/render.hpp"

namespace blocktower::render {
namespace {

uint8_t to_byte(double v) {
  const double clamped = std::fmin(255.0, std::fmax(0.0, v));
  return static_cast<uint8_t>(std::lround(clamped));
}

struct OrientedBox {
  double cx, cy, c, s, half;
  int class_id;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::fabs(lx) <= half && std::fabs(ly) <= half;
  }
};

}  // namespace

Rgb block_color(int class_id, double brightness) {
  const Rgb& base = kPalette.at(static_cast<std::size_t>(class_id));
  return {to_byte(base[0] * brightness), to_byte(base[1] * brightness),
          to_byte(base[2] * brightness)};
}

Camera make_camera(int n_blocks, double side, double scale, double shift) {
  Camera cam;
  cam.window_height = (n_blocks + 1.5) * side * scale;
  cam.center_x = shift;
  cam.center_y = 0.5 * cam.window_height - 0.5 * side * scale;
  return cam;
}

Frame rasterize(std::span<const physics::BlockPose> poses, std::span<const int> class_ids,
                double side, const Camera& cam, const RenderStyle& style, int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "image size must be > 0");
  if (class_ids.size() != poses.size())
    throw Error(ErrorCode::kInvalidArgument, "one class id per pose required");
  if (!(cam.window_height > 0.0)) throw Error(ErrorCode::kInvalidArgument, "window height must be > 0");

  Frame frame{Image(width, height), MaskImage(width, height)};
  const double pixel = cam.window_height / height;
  const double left = cam.center_x - 0.5 * pixel * width;
  const double top = cam.center_y + 0.5 * cam.window_height;

  const uint8_t bg = to_byte(255.0 * style.background_gray);
  for (auto& v : frame.image.data) v = bg;

  // Two rows whose centres lie just below y = 0.
  const int ground_row = static_cast<int>(std::floor(top / pixel - 0.5)) + 1;
  for (int r = ground_row; r < ground_row + 2; ++r) {
    if (r < 0 || r >= height) continue;
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) frame.image.at(x, r, c) = kGroundColor[c];
  }

  std::vector<OrientedBox> boxes;
  std::vector<Rgb> colors;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    boxes.push_back({p.x, p.y, std::cos(p.theta), std::sin(p.theta), 0.5 * side, class_ids[i]});
    colors.push_back(block_color(class_ids[i], style.brightness));
  }

  for (int row = 0; row < height; ++row) {
    const double y = top - (row + 0.5) * pixel;
    for (int col = 0; col < width; ++col) {
      const double x = left + (col + 0.5) * pixel;
      for (std::size_t k = boxes.size(); k-- > 0;) {
        if (!boxes[k].contains(x, y)) continue;
        frame.mask.at(col, row) = static_cast<uint8_t>(boxes[k].class_id);
        for (int c = 0; c < 3; ++c) frame.image.at(col, row, c) = colors[k][c];
        break;
      }
    }
  }
  return frame;
}

std::vector<Frame> render_sequence(const physics::Trajectory& traj, std::span<const int> class_ids,
                                   double side, const Camera& cam, const RenderStyle& style,
                                   std::span<const double> times, int width, int height) {
  std::vector<Frame> out;
  out.reserve(times.size());
  for (double t : times) {
    const double slot = t * traj.capture_hz;
    const double nearest = std::round(slot);
    if (!(t >= 0.0) || t > traj.duration + 1e-9 || std::fabs(slot - nearest) > 1e-6 ||
        nearest >= static_cast<double>(traj.frames.size())) {
      throw Error(ErrorCode::kTimeOutOfRange, "time " + std::to_string(t) + " s is not a captured frame");
    }
    out.push_back(rasterize(traj.frames[static_cast<std::size_t>(nearest)], class_ids, side, cam,
                            style, width, height));
  }
  return out;
}

}  // namespace blocktower::render
