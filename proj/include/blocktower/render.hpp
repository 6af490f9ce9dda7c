#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "blocktower/physics.hpp"

namespace blocktower::render {

inline constexpr int kDefaultSize = 56;
inline constexpr int kNumClasses = 5;  // background + four block colours

// Row-major RGB, 8 bits per channel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}
  uint8_t& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

// Row-major class ids, 0 = background.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> data;

  MaskImage() = default;
  MaskImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}
  uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const MaskImage&) const = default;
};

struct Frame {
  Image image;
  MaskImage mask;
};

// Orthographic window with square pixels; `window_height` spans the image
// height.
struct Camera {
  double center_x = 0.0;
  double center_y = 0.0;
  double window_height = 1.0;
};

struct RenderStyle {
  double background_gray = 0.5;  // [0, 1]
  double brightness = 1.0;       // multiplies block colours
};

using Rgb = std::array<uint8_t, 3>;
// Indexed by class id; entry 0 is unused.
inline constexpr std::array<Rgb, 5> kPalette{{
    {0, 0, 0},
    {220, 40, 40},
    {40, 180, 60},
    {45, 90, 220},
    {230, 210, 40},
}};
inline constexpr Rgb kGroundColor{30, 30, 30};

Rgb block_color(int class_id, double brightness);

// Window of height (n_blocks + 1.5) * side * scale, horizontally centred on
// `shift`, with the ground half a block above the bottom edge.
Camera make_camera(int n_blocks, double side, double scale, double shift);

// Point-sampled rendering; higher-indexed blocks win overlaps.
Frame rasterize(std::span<const physics::BlockPose> poses, std::span<const int> class_ids,
                double side, const Camera& cam, const RenderStyle& style,
                int width = kDefaultSize, int height = kDefaultSize);

inline constexpr std::array<double, 4> kMaskTimes{0.0, 1.0, 2.0, 4.0};

// Renders the captured frame at each time. Throws Error(kTimeOutOfRange)
// when a time is outside [0, duration] or off the capture grid.
std::vector<Frame> render_sequence(const physics::Trajectory& traj, std::span<const int> class_ids,
                                   double side, const Camera& cam, const RenderStyle& style,
                                   std::span<const double> times = kMaskTimes,
                                   int width = kDefaultSize, int height = kDefaultSize);

// Binary PPM (P6, maxval 255) and PGM (P5, maxval 4) codecs. Decoders throw
// Error(kCorruptFile) naming `source` on bad magic, header, size or values.
std::string encode_ppm(const Image& img);
std::string encode_pgm(const MaskImage& mask);
Image decode_ppm(std::string_view bytes, const std::string& source);
MaskImage decode_pgm(std::string_view bytes, const std::string& source);

// File helpers: Error(kIoFailure) on write failure, Error(kMissingFile) when
// a file to read does not exist.
void write_ppm(const std::string& path, const Image& img);
void write_pgm(const std::string& path, const MaskImage& mask);
Image read_ppm(const std::string& path);
MaskImage read_pgm(const std::string& path);
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

// Grayscale PGM (maxval 255) for arbitrary 8-bit grids.
std::string encode_pgm8(int width, int height, std::span<const uint8_t> values);

// 8-bit RGB PNG (zlib-compressed, filter 0).
std::string encode_png(const Image& img);

}  // namespace blocktower::render
