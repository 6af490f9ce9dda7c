#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace blocktower::physics {

struct PhysicsParams {
  double gravity = 9.8;       // m/s^2, acts along -y
  double side = 1.0;          // block edge length, m
  double mass = 1.0;          // kg, identical for every block
  double friction_mu = 0.6;   // Coulomb coefficient
  double restitution = 0.0;
  double dt = 1.0 / 240.0;    // s
  int solver_iters = 16;
  double baumgarte_beta = 0.2;
  double slop = 0.005;        // m, penetration tolerated before correction
  double sim_duration = 5.0;  // s

  // Throws Error(kInvalidArgument) when an invariant does not hold.
  void validate() const;
};

struct BlockPose {
  double x = 0.0;  // centre of mass, m
  double y = 0.0;  // m, ground at y = 0, y up
  double theta = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;
};

inline constexpr int kMinBlocks = 2;
inline constexpr int kMaxBlocks = 4;
inline constexpr double kDefaultCaptureHz = 8.0;

// Blocks are ordered bottom to top; class ids are 1=red 2=green 3=blue
// 4=yellow.
struct TowerScene {
  std::vector<BlockPose> blocks;
  std::vector<int> class_ids;
  PhysicsParams params;

  int n_blocks() const { return static_cast<int>(blocks.size()); }
  bool axis_aligned(double tol = 1e-9) const;
  // Throws Error(kInvalidScene) naming the first violated invariant.
  void validate() const;
};

// An axis-aligned tower resting on the ground with the given centre x
// offsets (one per block, bottom to top).
TowerScene make_stacked_scene(std::span<const double> xs, const PhysicsParams& params = {});

struct Trajectory {
  double capture_hz = kDefaultCaptureHz;
  double duration = 0.0;
  // frames[k][i] is block i at t = k / capture_hz.
  std::vector<std::vector<BlockPose>> frames;

  std::size_t frame_count() const { return frames.size(); }
  const std::vector<BlockPose>& initial() const { return frames.front(); }
  const std::vector<BlockPose>& final_frame() const { return frames.back(); }
};

struct InterfaceSupport {
  int index = 0;  // 0 = ground, k = between block k and k+1 (1-based)
  double lo = 0.0;
  double hi = 0.0;
  double com = 0.0;  // mean x of every block above the interface
  double margin = 0.0;
  bool overlapping = true;
};

struct StabilityReport {
  double margin = 0.0;
  std::vector<InterfaceSupport> per_interface;
  bool any_no_overlap = false;

  bool stable() const { return margin > 0.0; }
};

// Static equilibrium margin of an axis-aligned stack. Throws
// Error(kNonAxisAligned) if any |theta| > 1e-9. An empty support interval is
// not thrown: that interface's margin is the (negative) overlap deficit and
// `any_no_overlap` is set.
StabilityReport static_stability(const TowerScene& scene);

// Deterministic sequential-impulse simulation of a validated tower.
Trajectory simulate(const TowerScene& scene, double capture_hz = kDefaultCaptureHz);

// Same engine without the tower-shape preconditions (any number of blocks,
// any starting poses). Throws Error(kDivergedSimulation) on non-finite state.
Trajectory simulate_blocks(std::span<const BlockPose> blocks, const PhysicsParams& params,
                           double capture_hz = kDefaultCaptureHz);

inline constexpr double kFellDisplacementFraction = 0.25;
inline constexpr double kFellRotationRad = 0.17453292519943295;  // 10 degrees

bool fell_label(const Trajectory& traj, const PhysicsParams& params);

// Total kinetic + potential energy of one frame.
double mechanical_energy(std::span<const BlockPose> frame, const PhysicsParams& params);

// Largest pairwise penetration depth between blocks in a frame (0 if none).
double max_block_penetration(std::span<const BlockPose> frame, double side);

// CSV with header `frame,t,block,x,y,theta,vx,vy,omega`, 9 significant digits.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
std::string trajectory_to_csv(const Trajectory& traj);
// Throws Error(kCorruptFile) on malformed input.
Trajectory parse_trajectory_csv(std::istream& in, const std::string& source_name);

}  // namespace blocktower::physics
