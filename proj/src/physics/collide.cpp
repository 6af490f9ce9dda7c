#include "collide.hpp"

#include <algorithm>
#include <utility>

namespace blocktower::physics::detail {
namespace {

enum class Axis { kFaceAX, kFaceAY, kFaceBX, kFaceBY };

// Box vertex and edge numbering:
//
//        ^ y
//        |
//        e1
//   v2 ------ v1
//    |        |
// e2 |        | e4  --> x
//    |        |
//   v3 ------ v4
//        e3
enum Edge : uint8_t { kNoEdge = 0, kEdge1, kEdge2, kEdge3, kEdge4 };

struct ClipVertex {
  Vec2 v;
  FeaturePair fp;
};

void flip(FeaturePair& fp) {
  std::swap(fp.in_edge1, fp.in_edge2);
  std::swap(fp.out_edge1, fp.out_edge2);
}

int clip_segment_to_line(ClipVertex out[2], const ClipVertex in[2], Vec2 normal, double offset,
                         uint8_t clip_edge) {
  int n = 0;
  const double d0 = dot(normal, in[0].v) - offset;
  const double d1 = dot(normal, in[1].v) - offset;
  if (d0 <= 0.0) out[n++] = in[0];
  if (d1 <= 0.0) out[n++] = in[1];
  if (d0 * d1 < 0.0) {
    const double t = d0 / (d0 - d1);
    out[n].v = in[0].v + t * (in[1].v - in[0].v);
    if (d0 > 0.0) {
      out[n].fp = in[0].fp;
      out[n].fp.in_edge1 = clip_edge;
      out[n].fp.in_edge2 = kNoEdge;
    } else {
      out[n].fp = in[1].fp;
      out[n].fp.out_edge1 = clip_edge;
      out[n].fp.out_edge2 = kNoEdge;
    }
    ++n;
  }
  return n;
}

void incident_edge(ClipVertex c[2], Vec2 h, Vec2 pos, const Mat22& rot, Vec2 normal) {
  // Reference normal expressed in the incident box frame, flipped.
  const Vec2 n = -(rot.transpose() * normal);
  const Vec2 n_abs = abs(n);
  if (n_abs.x > n_abs.y) {
    if (n.x > 0.0) {
      c[0].v = {h.x, -h.y};
      c[0].fp.in_edge2 = kEdge3;
      c[0].fp.out_edge2 = kEdge4;
      c[1].v = {h.x, h.y};
      c[1].fp.in_edge2 = kEdge4;
      c[1].fp.out_edge2 = kEdge1;
    } else {
      c[0].v = {-h.x, h.y};
      c[0].fp.in_edge2 = kEdge1;
      c[0].fp.out_edge2 = kEdge2;
      c[1].v = {-h.x, -h.y};
      c[1].fp.in_edge2 = kEdge2;
      c[1].fp.out_edge2 = kEdge3;
    }
  } else {
    if (n.y > 0.0) {
      c[0].v = {h.x, h.y};
      c[0].fp.in_edge2 = kEdge4;
      c[0].fp.out_edge2 = kEdge1;
      c[1].v = {-h.x, h.y};
      c[1].fp.in_edge2 = kEdge1;
      c[1].fp.out_edge2 = kEdge2;
    } else {
      c[0].v = {-h.x, -h.y};
      c[0].fp.in_edge2 = kEdge2;
      c[0].fp.out_edge2 = kEdge3;
      c[1].v = {h.x, -h.y};
      c[1].fp.in_edge2 = kEdge3;
      c[1].fp.out_edge2 = kEdge4;
    }
  }
  c[0].v = pos + rot * c[0].v;
  c[1].v = pos + rot * c[1].v;
}

}  // namespace

Manifold collide_boxes(const BoxShape& a, const BoxShape& b) {
  Manifold m;
  const Vec2 gap = b.pos - a.pos;
  const double reach = (a.half + b.half) * 1.4142135623730951;
  if (dot(gap, gap) > reach * reach) return m;
  const Vec2 ha{a.half, a.half};
  const Vec2 hb{b.half, b.half};
  const Mat22 rot_a = Mat22::rotation(a.angle);
  const Mat22 rot_b = Mat22::rotation(b.angle);
  const Mat22 rot_at = rot_a.transpose();
  const Mat22 rot_bt = rot_b.transpose();

  const Vec2 dp = b.pos - a.pos;
  const Vec2 da = rot_at * dp;
  const Vec2 db = rot_bt * dp;
  const Mat22 c = rot_at * rot_b;
  const Mat22 abs_c = abs(c);
  const Mat22 abs_ct = abs_c.transpose();

  const Vec2 face_a = abs(da) - ha - abs_c * hb;
  if (face_a.x > 0.0 || face_a.y > 0.0) return m;
  const Vec2 face_b = abs(db) - abs_ct * ha - hb;
  if (face_b.x > 0.0 || face_b.y > 0.0) return m;

  // Prefer A's faces, then B's, unless another axis is clearly better.
  constexpr double kRelativeTol = 0.95;
  constexpr double kAbsoluteTol = 0.01;
  Axis axis = Axis::kFaceAX;
  double separation = face_a.x;
  Vec2 normal = da.x > 0.0 ? rot_a.col1 : -rot_a.col1;
  if (face_a.y > kRelativeTol * separation + kAbsoluteTol * ha.y) {
    axis = Axis::kFaceAY;
    separation = face_a.y;
    normal = da.y > 0.0 ? rot_a.col2 : -rot_a.col2;
  }
  if (face_b.x > kRelativeTol * separation + kAbsoluteTol * hb.x) {
    axis = Axis::kFaceBX;
    separation = face_b.x;
    normal = db.x > 0.0 ? rot_b.col1 : -rot_b.col1;
  }
  if (face_b.y > kRelativeTol * separation + kAbsoluteTol * hb.y) {
    axis = Axis::kFaceBY;
    separation = face_b.y;
    normal = db.y > 0.0 ? rot_b.col2 : -rot_b.col2;
  }

  Vec2 front_normal;
  Vec2 side_normal;
  ClipVertex incident[2];
  double front = 0.0;
  double neg_side = 0.0;
  double pos_side = 0.0;
  uint8_t neg_edge = kNoEdge;
  uint8_t pos_edge = kNoEdge;
  switch (axis) {
    case Axis::kFaceAX: {
      front_normal = normal;
      front = dot(a.pos, front_normal) + ha.x;
      side_normal = rot_a.col2;
      const double side = dot(a.pos, side_normal);
      neg_side = -side + ha.y;
      pos_side = side + ha.y;
      neg_edge = kEdge3;
      pos_edge = kEdge1;
      incident_edge(incident, hb, b.pos, rot_b, front_normal);
      break;
    }
    case Axis::kFaceAY: {
      front_normal = normal;
      front = dot(a.pos, front_normal) + ha.y;
      side_normal = rot_a.col1;
      const double side = dot(a.pos, side_normal);
      neg_side = -side + ha.x;
      pos_side = side + ha.x;
      neg_edge = kEdge2;
      pos_edge = kEdge4;
      incident_edge(incident, hb, b.pos, rot_b, front_normal);
      break;
    }
    case Axis::kFaceBX: {
      front_normal = -normal;
      front = dot(b.pos, front_normal) + hb.x;
      side_normal = rot_b.col2;
      const double side = dot(b.pos, side_normal);
      neg_side = -side + hb.y;
      pos_side = side + hb.y;
      neg_edge = kEdge3;
      pos_edge = kEdge1;
      incident_edge(incident, ha, a.pos, rot_a, front_normal);
      break;
    }
    case Axis::kFaceBY: {
      front_normal = -normal;
      front = dot(b.pos, front_normal) + hb.y;
      side_normal = rot_b.col1;
      const double side = dot(b.pos, side_normal);
      neg_side = -side + hb.x;
      pos_side = side + hb.x;
      neg_edge = kEdge2;
      pos_edge = kEdge4;
      incident_edge(incident, ha, a.pos, rot_a, front_normal);
      break;
    }
  }

  ClipVertex clip1[2];
  ClipVertex clip2[2];
  if (clip_segment_to_line(clip1, incident, -side_normal, neg_side, neg_edge) < 2) return m;
  if (clip_segment_to_line(clip2, clip1, side_normal, pos_side, pos_edge) < 2) return m;

  for (const ClipVertex& cv : clip2) {
    const double sep = dot(front_normal, cv.v) - front;
    if (sep > 0.0) continue;
    ContactPoint& cp = m.points[m.count++];
    cp.separation = sep;
    cp.normal = normal;
    // Slide onto the reference face.
    cp.position = cv.v - sep * front_normal;
    FeaturePair fp = cv.fp;
    if (axis == Axis::kFaceBX || axis == Axis::kFaceBY) flip(fp);
    cp.feature = fp.key();
  }
  return m;
}

Manifold collide_ground(const BoxShape& box) {
  if (box.pos.y > box.half * 1.4142135623730951) return {};
  const Mat22 rot = Mat22::rotation(box.angle);
  const double h = box.half;
  const std::array<Vec2, 4> local{{{h, h}, {-h, h}, {-h, -h}, {h, -h}}};
  std::array<Vec2, 4> corners;
  for (int i = 0; i < 4; ++i) corners[i] = box.pos + rot * local[i];

  std::array<int, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](int l, int r) { return corners[l].y < corners[r].y; });

  Manifold m;
  for (int k = 0; k < 2; ++k) {
    const Vec2 p = corners[order[k]];
    if (p.y > 0.0) continue;
    ContactPoint& cp = m.points[m.count++];
    cp.separation = p.y;
    cp.normal = {0.0, 1.0};
    cp.position = {p.x, 0.0};
    cp.feature = static_cast<uint32_t>(order[k]) + 1;
  }
  return m;
}

}  // namespace blocktower::physics::detail
