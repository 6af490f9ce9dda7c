#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "blocktower/common/error.hpp"
#include "blocktower/physics.hpp"
#include "collide.hpp"

namespace blocktower::physics {
namespace {

using detail::BoxShape;
using detail::Manifold;
using detail::Vec2;

struct Body {
  Vec2 pos;
  double angle = 0.0;
  Vec2 vel;
  double omega = 0.0;
  double inv_mass = 0.0;
  double inv_inertia = 0.0;
};

struct Contact {
  Vec2 position;
  Vec2 normal;
  double separation = 0.0;
  uint32_t feature = 0;
  Vec2 r1;
  Vec2 r2;
  double pn = 0.0;  // accumulated normal impulse
  double pt = 0.0;  // accumulated tangent impulse
  double mass_normal = 0.0;
  double mass_tangent = 0.0;
  double bias = 0.0;
};

// Contact set between body `a` (-1 = ground) and body `b`.
struct Arbiter {
  int a = -1;
  int b = 0;
  std::array<Contact, 2> contacts;
  int count = 0;

  // Carries accumulated impulses over from the previous step for contacts
  // with matching features.
  void update(const Manifold& m) {
    std::array<Contact, 2> merged;
    for (int i = 0; i < m.count; ++i) {
      Contact c;
      c.position = m.points[i].position;
      c.normal = m.points[i].normal;
      c.separation = m.points[i].separation;
      c.feature = m.points[i].feature;
      for (int j = 0; j < count; ++j) {
        if (contacts[j].feature == c.feature) {
          c.pn = contacts[j].pn;
          c.pt = contacts[j].pt;
          break;
        }
      }
      merged[i] = c;
    }
    contacts = merged;
    count = m.count;
  }
};

class World {
 public:
  World(std::span<const BlockPose> blocks, const PhysicsParams& params) : params_(params) {
    const double inertia = params.mass * params.side * params.side / 6.0;
    for (const BlockPose& p : blocks) {
      Body body;
      body.pos = {p.x, p.y};
      body.angle = p.theta;
      body.vel = {p.vx, p.vy};
      body.omega = p.omega;
      body.inv_mass = 1.0 / params.mass;
      body.inv_inertia = 1.0 / inertia;
      bodies_.push_back(body);
    }
    const int n = static_cast<int>(bodies_.size());
    for (int i = 0; i < n; ++i) arbiters_.push_back({-1, i, {}, 0});
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) arbiters_.push_back({i, j, {}, 0});
  }

  void step() {
    const double dt = params_.dt;
    const double inv_dt = 1.0 / dt;

    for (Arbiter& arb : arbiters_) {
      const BoxShape sb = shape(arb.b);
      arb.update(arb.a < 0 ? detail::collide_ground(sb) : detail::collide_boxes(shape(arb.a), sb));
    }

    for (Body& body : bodies_) body.vel.y -= dt * params_.gravity;

    for (Arbiter& arb : arbiters_) prestep(arb, inv_dt);
    for (int it = 0; it < params_.solver_iters; ++it)
      for (Arbiter& arb : arbiters_) apply_impulses(arb);

    for (Body& body : bodies_) {
      body.pos = body.pos + dt * body.vel;
      body.angle += dt * body.omega;
    }
  }

  bool finite() const {
    for (const Body& b : bodies_) {
      if (!std::isfinite(b.pos.x) || !std::isfinite(b.pos.y) || !std::isfinite(b.angle) ||
          !std::isfinite(b.vel.x) || !std::isfinite(b.vel.y) || !std::isfinite(b.omega))
        return false;
    }
    return true;
  }

  std::vector<BlockPose> snapshot() const {
    std::vector<BlockPose> out;
    out.reserve(bodies_.size());
    for (const Body& b : bodies_)
      out.push_back({b.pos.x, b.pos.y, b.angle, b.vel.x, b.vel.y, b.omega});
    return out;
  }

 private:
  BoxShape shape(int i) const {
    return {bodies_[i].pos, bodies_[i].angle, 0.5 * params_.side};
  }

  Body& body_or_ground(int i) { return i < 0 ? ground_ : bodies_[i]; }

  void prestep(Arbiter& arb, double inv_dt) {
    Body& b1 = body_or_ground(arb.a);
    Body& b2 = body_or_ground(arb.b);
    for (int i = 0; i < arb.count; ++i) {
      Contact& c = arb.contacts[i];
      c.r1 = c.position - b1.pos;
      c.r2 = c.position - b2.pos;

      const double rn1 = dot(c.r1, c.normal);
      const double rn2 = dot(c.r2, c.normal);
      const double k_normal = b1.inv_mass + b2.inv_mass +
                              b1.inv_inertia * (dot(c.r1, c.r1) - rn1 * rn1) +
                              b2.inv_inertia * (dot(c.r2, c.r2) - rn2 * rn2);
      c.mass_normal = 1.0 / k_normal;

      const Vec2 tangent = cross(c.normal, 1.0);
      const double rt1 = dot(c.r1, tangent);
      const double rt2 = dot(c.r2, tangent);
      const double k_tangent = b1.inv_mass + b2.inv_mass +
                               b1.inv_inertia * (dot(c.r1, c.r1) - rt1 * rt1) +
                               b2.inv_inertia * (dot(c.r2, c.r2) - rt2 * rt2);
      c.mass_tangent = 1.0 / k_tangent;

      const double penetration = -c.separation;
      c.bias = params_.baumgarte_beta * inv_dt * std::max(0.0, penetration - params_.slop);
      if (params_.restitution > 0.0) {
        const Vec2 dv = b2.vel + cross(b2.omega, c.r2) - b1.vel - cross(b1.omega, c.r1);
        const double vn = dot(dv, c.normal);
        if (vn < -kRestitutionThreshold) c.bias = std::max(c.bias, -params_.restitution * vn);
      }

      // Warm start.
      const Vec2 p = c.pn * c.normal + c.pt * tangent;
      apply(b1, b2, c, p);
    }
  }

  void apply_impulses(Arbiter& arb) {
    Body& b1 = body_or_ground(arb.a);
    Body& b2 = body_or_ground(arb.b);
    for (int i = 0; i < arb.count; ++i) {
      Contact& c = arb.contacts[i];

      Vec2 dv = b2.vel + cross(b2.omega, c.r2) - b1.vel - cross(b1.omega, c.r1);
      const double vn = dot(dv, c.normal);
      double dpn = c.mass_normal * (-vn + c.bias);
      const double pn0 = c.pn;
      c.pn = std::max(pn0 + dpn, 0.0);
      dpn = c.pn - pn0;
      apply(b1, b2, c, dpn * c.normal);

      dv = b2.vel + cross(b2.omega, c.r2) - b1.vel - cross(b1.omega, c.r1);
      const Vec2 tangent = cross(c.normal, 1.0);
      const double vt = dot(dv, tangent);
      double dpt = c.mass_tangent * (-vt);
      const double max_pt = params_.friction_mu * c.pn;
      const double pt0 = c.pt;
      c.pt = std::clamp(pt0 + dpt, -max_pt, max_pt);
      dpt = c.pt - pt0;
      apply(b1, b2, c, dpt * tangent);
    }
  }

  static void apply(Body& b1, Body& b2, const Contact& c, Vec2 p) {
    b1.vel = b1.vel - b1.inv_mass * p;
    b1.omega -= b1.inv_inertia * cross(c.r1, p);
    b2.vel = b2.vel + b2.inv_mass * p;
    b2.omega += b2.inv_inertia * cross(c.r2, p);
  }

  static constexpr double kRestitutionThreshold = 0.5;  // m/s

  PhysicsParams params_;
  std::vector<Body> bodies_;
  Body ground_;  // zero inverse mass and inertia
  std::vector<Arbiter> arbiters_;
};

}  // namespace

void PhysicsParams::validate() const {
  auto fail = [](const char* what) { throw Error(ErrorCode::kInvalidArgument, what); };
  if (!(gravity > 0.0)) fail("gravity must be > 0");
  if (!(side > 0.0)) fail("side must be > 0");
  if (!(mass > 0.0)) fail("mass must be > 0");
  if (!(dt > 0.0)) fail("dt must be > 0");
  if (solver_iters < 1) fail("solver_iters must be >= 1");
  if (!(restitution >= 0.0 && restitution <= 1.0)) fail("restitution must be in [0, 1]");
  if (!(friction_mu >= 0.0)) fail("friction_mu must be >= 0");
  if (!(baumgarte_beta >= 0.0)) fail("baumgarte_beta must be >= 0");
  if (!(slop >= 0.0)) fail("slop must be >= 0");
  if (!(sim_duration >= 0.0)) fail("sim_duration must be >= 0");
}

Trajectory simulate_blocks(std::span<const BlockPose> blocks, const PhysicsParams& params,
                           double capture_hz) {
  params.validate();
  if (!(capture_hz > 0.0)) throw Error(ErrorCode::kInvalidArgument, "capture_hz must be > 0");
  const double steps_per_frame_f = 1.0 / (capture_hz * params.dt);
  const auto steps_per_frame = static_cast<long>(std::llround(steps_per_frame_f));
  if (steps_per_frame < 1 || std::fabs(steps_per_frame_f - steps_per_frame) > 1e-6) {
    throw Error(ErrorCode::kInvalidArgument,
                "capture period must be a whole number of integration steps");
  }
  const auto last_frame = static_cast<long>(std::floor(params.sim_duration * capture_hz + 1e-9));

  Trajectory traj;
  traj.capture_hz = capture_hz;
  traj.duration = params.sim_duration;
  traj.frames.reserve(static_cast<std::size_t>(last_frame) + 1);
  traj.frames.emplace_back(blocks.begin(), blocks.end());

  World world(blocks, params);
  for (long frame = 1; frame <= last_frame; ++frame) {
    for (long s = 0; s < steps_per_frame; ++s) world.step();
    if (!world.finite()) {
      std::ostringstream msg;
      msg << "non-finite pose at frame " << frame;
      throw Error(ErrorCode::kDivergedSimulation, msg.str());
    }
    traj.frames.push_back(world.snapshot());
  }
  return traj;
}

Trajectory simulate(const TowerScene& scene, double capture_hz) {
  scene.validate();
  return simulate_blocks(scene.blocks, scene.params, capture_hz);
}

bool fell_label(const Trajectory& traj, const PhysicsParams& params) {
  if (traj.frames.empty()) throw Error(ErrorCode::kInvalidArgument, "empty trajectory");
  const double limit = kFellDisplacementFraction * params.side;
  const auto& first = traj.initial();
  const auto& last = traj.final_frame();
  for (std::size_t i = 0; i < first.size() && i < last.size(); ++i) {
    if (std::fabs(last[i].x - first[i].x) > limit) return true;
    if (std::fabs(last[i].y - first[i].y) > limit) return true;
    if (std::fabs(last[i].theta - first[i].theta) > kFellRotationRad) return true;
  }
  return false;
}

double mechanical_energy(std::span<const BlockPose> frame, const PhysicsParams& params) {
  const double inertia = params.mass * params.side * params.side / 6.0;
  double e = 0.0;
  for (const BlockPose& p : frame) {
    e += 0.5 * params.mass * (p.vx * p.vx + p.vy * p.vy) + 0.5 * inertia * p.omega * p.omega +
         params.mass * params.gravity * p.y;
  }
  return e;
}

double max_block_penetration(std::span<const BlockPose> frame, double side) {
  double worst = 0.0;
  for (std::size_t i = 0; i < frame.size(); ++i) {
    for (std::size_t j = i + 1; j < frame.size(); ++j) {
      const BoxShape a{{frame[i].x, frame[i].y}, frame[i].theta, 0.5 * side};
      const BoxShape b{{frame[j].x, frame[j].y}, frame[j].theta, 0.5 * side};
      const Manifold m = detail::collide_boxes(a, b);
      for (int k = 0; k < m.count; ++k) worst = std::max(worst, -m.points[k].separation);
    }
  }
  return worst;
}

bool TowerScene::axis_aligned(double tol) const {
  return std::all_of(blocks.begin(), blocks.end(),
                     [tol](const BlockPose& b) { return std::fabs(b.theta) <= tol; });
}

void TowerScene::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidScene, what); };
  params.validate();
  const int n = n_blocks();
  if (n < kMinBlocks || n > kMaxBlocks) fail("tower must have 2..4 blocks");
  if (static_cast<int>(class_ids.size()) != n) fail("class_ids size must equal block count");
  for (int i = 0; i < n; ++i) {
    if (class_ids[i] < 1 || class_ids[i] > 4) fail("class ids must be in 1..4");
    for (int j = i + 1; j < n; ++j)
      if (class_ids[i] == class_ids[j]) fail("class ids must be distinct");
    const BlockPose& b = blocks[i];
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.theta) ||
        !std::isfinite(b.vx) || !std::isfinite(b.vy) || !std::isfinite(b.omega))
      fail("block poses must be finite");
  }
  const double tol = params.slop + 1e-12;
  if (max_block_penetration(blocks, params.side) > tol) fail("blocks interpenetrate beyond slop");
  if (!axis_aligned()) return;  // rest conditions below are exact only for level blocks
  const double h = 0.5 * params.side;
  if (std::fabs(blocks[0].y - h) > tol) fail("bottom block must rest on the ground");
  for (int i = 0; i + 1 < n; ++i) {
    const double gap = (blocks[i + 1].y - h) - (blocks[i].y + h);
    if (std::fabs(gap) > tol) fail("each block must rest on the one below");
  }
}

TowerScene make_stacked_scene(std::span<const double> xs, const PhysicsParams& params) {
  TowerScene scene;
  scene.params = params;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    BlockPose p;
    p.x = xs[i];
    p.y = params.side * (0.5 + static_cast<double>(i));
    scene.blocks.push_back(p);
    scene.class_ids.push_back(static_cast<int>(i % 4) + 1);
  }
  return scene;
}

}  // namespace blocktower::physics
