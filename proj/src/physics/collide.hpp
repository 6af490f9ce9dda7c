#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace blocktower::physics::detail {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline Vec2 cross(double w, Vec2 r) { return {-w * r.y, w * r.x}; }
inline Vec2 cross(Vec2 a, double s) { return {s * a.y, -s * a.x}; }
inline Vec2 abs(Vec2 a) { return {std::fabs(a.x), std::fabs(a.y)}; }

// Column-major 2x2 rotation-like matrix.
struct Mat22 {
  Vec2 col1;
  Vec2 col2;

  static Mat22 rotation(double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {{c, s}, {-s, c}};
  }
  Mat22 transpose() const { return {{col1.x, col2.x}, {col1.y, col2.y}}; }
};

inline Vec2 operator*(const Mat22& m, Vec2 v) {
  return {m.col1.x * v.x + m.col2.x * v.y, m.col1.y * v.x + m.col2.y * v.y};
}
inline Mat22 operator*(const Mat22& a, const Mat22& b) { return {a * b.col1, a * b.col2}; }
inline Mat22 abs(const Mat22& m) { return {abs(m.col1), abs(m.col2)}; }

struct BoxShape {
  Vec2 pos;
  double angle = 0.0;
  double half = 0.5;
};

// Identifies which box edges produced a contact so impulses can be carried
// over between steps.
struct FeaturePair {
  uint8_t in_edge1 = 0;
  uint8_t out_edge1 = 0;
  uint8_t in_edge2 = 0;
  uint8_t out_edge2 = 0;

  uint32_t key() const {
    return uint32_t{in_edge1} | (uint32_t{out_edge1} << 8) | (uint32_t{in_edge2} << 16) |
           (uint32_t{out_edge2} << 24);
  }
};

struct ContactPoint {
  Vec2 position;
  Vec2 normal;  // from body A to body B
  double separation = 0.0;
  uint32_t feature = 0;
};

struct Manifold {
  std::array<ContactPoint, 2> points;
  int count = 0;
};

// Separating-axis test plus reference-face clipping; at most two points.
Manifold collide_boxes(const BoxShape& a, const BoxShape& b);

// Ground half-plane y <= 0 against a box: the two lowest corners, kept when
// they are at or below the ground. Normal points up (ground is body A).
Manifold collide_ground(const BoxShape& box);

}  // namespace blocktower::physics::detail
