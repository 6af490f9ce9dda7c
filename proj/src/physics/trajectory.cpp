#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "blocktower/common/error.hpp"
#include "blocktower/physics.hpp"

namespace blocktower::physics {
namespace {

constexpr const char* kHeader = "frame,t,block,x,y,theta,vx,vy,omega";

void append_number(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  line += ',';
  line += buf;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  out << kHeader << '\n';
  std::string line;
  for (std::size_t f = 0; f < traj.frames.size(); ++f) {
    const double t = static_cast<double>(f) / traj.capture_hz;
    for (std::size_t b = 0; b < traj.frames[f].size(); ++b) {
      const BlockPose& p = traj.frames[f][b];
      line = std::to_string(f);
      append_number(line, t);
      line += ',';
      line += std::to_string(b);
      append_number(line, p.x);
      append_number(line, p.y);
      append_number(line, p.theta);
      append_number(line, p.vx);
      append_number(line, p.vy);
      append_number(line, p.omega);
      out << line << '\n';
    }
  }
}

std::string trajectory_to_csv(const Trajectory& traj) {
  std::ostringstream out;
  write_trajectory_csv(out, traj);
  return out.str();
}

Trajectory parse_trajectory_csv(std::istream& in, const std::string& source_name) {
  auto corrupt = [&](const std::string& why) {
    throw Error(ErrorCode::kCorruptFile, source_name + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != kHeader) corrupt("bad trajectory header");

  Trajectory traj;
  double last_t = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double v[9];
    int count = 0;
    while (std::getline(row, cell, ',')) {
      if (count >= 9) corrupt("too many columns");
      try {
        std::size_t used = 0;
        v[count] = std::stod(cell, &used);
        if (used != cell.size()) corrupt("bad number '" + cell + "'");
      } catch (const std::logic_error&) {
        corrupt("bad number '" + cell + "'");
      }
      ++count;
    }
    if (count != 9) corrupt("expected 9 columns");
    const auto frame = static_cast<std::size_t>(v[0]);
    const auto block = static_cast<std::size_t>(v[2]);
    if (frame != traj.frames.size() && frame + 1 != traj.frames.size()) corrupt("frames out of order");
    if (frame == traj.frames.size()) traj.frames.emplace_back();
    if (block != traj.frames.back().size()) corrupt("blocks out of order");
    traj.frames.back().push_back({v[3], v[4], v[5], v[6], v[7], v[8]});
    last_t = v[1];
    if (frame == 1) traj.capture_hz = 1.0 / v[1];
  }
  if (traj.frames.empty()) corrupt("no frames");
  if (traj.frames.size() >= 2) traj.capture_hz = std::round(traj.capture_hz * 1e6) / 1e6;
  traj.duration = last_t;
  return traj;
}

}  // namespace blocktower::physics
