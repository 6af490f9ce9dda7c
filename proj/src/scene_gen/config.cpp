#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "blocktower/common/error.hpp"
#include "blocktower/scene_gen.hpp"

namespace blocktower::scenegen {
namespace {

using nlohmann::json;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) invalid(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) invalid("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    invalid(std::string("bad value for '") + key + "': " + e.what());
  }
}

void read_range(const json& j, const char* key, std::array<double, 2>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    invalid(std::string("'") + key + "' must be a [lo, hi] pair");
  out = {v[0].get<double>(), v[1].get<double>()};
}

void check_range(const std::array<double, 2>& r, const char* name) {
  if (!std::isfinite(r[0]) || !std::isfinite(r[1]) || r[0] > r[1])
    invalid(std::string(name) + " must be a finite [lo, hi] with lo <= hi");
}

}  // namespace

int GenConfig::test_count_per_cell() const {
  return static_cast<int>(std::lround(count_per_cell * test_fraction));
}

void GenConfig::validate() const {
  if (count_per_cell < 1) invalid("count_per_cell must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) invalid("test_fraction must be in [0, 1)");
  if (!(offset_range > 0.0 && offset_range < 1.0)) invalid("offset_range must be in (0, 1)");
  if (!(tilt_range_deg >= 0.0 && tilt_range_deg < 45.0)) invalid("tilt_range must be in [0, 45)");
  check_range(camera_scale_range, "camera scale range");
  if (camera_scale_range[0] <= 0.0) invalid("camera scale must be > 0");
  check_range(camera_shift_range, "camera shift range");
  check_range(background_range, "background range");
  check_range(brightness_range, "brightness range");
  if (background_range[0] < 0.0 || background_range[1] > 1.0) invalid("background must be in [0, 1]");
  if (brightness_range[0] < 0.0 || brightness_range[1] > 1.0) invalid("brightness must be in [0, 1]");
  try {
    physics.validate();
  } catch (const Error& e) {
    invalid(e.what());
  }
}

GenConfig gen_config_from_json(const json& j) {
  check_keys(j,
             {"master_seed", "count_per_cell", "test_fraction", "offset_range", "tilt_range",
              "camera_scale_range", "camera_shift_range", "background_range", "brightness_range",
              "physics"},
             "gen config");
  GenConfig cfg;
  read(j, "master_seed", cfg.master_seed);
  read(j, "count_per_cell", cfg.count_per_cell);
  read(j, "test_fraction", cfg.test_fraction);
  read(j, "offset_range", cfg.offset_range);
  read(j, "tilt_range", cfg.tilt_range_deg);
  read_range(j, "camera_scale_range", cfg.camera_scale_range);
  read_range(j, "camera_shift_range", cfg.camera_shift_range);
  read_range(j, "background_range", cfg.background_range);
  read_range(j, "brightness_range", cfg.brightness_range);
  if (j.contains("physics")) {
    const json& p = j.at("physics");
    check_keys(p,
               {"gravity", "side", "mass", "friction_mu", "restitution", "dt", "solver_iters",
                "baumgarte_beta", "slop", "sim_duration"},
               "physics");
    auto& ph = cfg.physics;
    read(p, "gravity", ph.gravity);
    read(p, "side", ph.side);
    read(p, "mass", ph.mass);
    read(p, "friction_mu", ph.friction_mu);
    read(p, "restitution", ph.restitution);
    read(p, "dt", ph.dt);
    read(p, "solver_iters", ph.solver_iters);
    read(p, "baumgarte_beta", ph.baumgarte_beta);
    read(p, "slop", ph.slop);
    read(p, "sim_duration", ph.sim_duration);
  }
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json gen_config_to_json(const GenConfig& cfg) {
  nlohmann::ordered_json j;
  j["master_seed"] = cfg.master_seed;
  j["count_per_cell"] = cfg.count_per_cell;
  j["test_fraction"] = cfg.test_fraction;
  j["offset_range"] = cfg.offset_range;
  j["tilt_range"] = cfg.tilt_range_deg;
  j["camera_scale_range"] = cfg.camera_scale_range;
  j["camera_shift_range"] = cfg.camera_shift_range;
  j["background_range"] = cfg.background_range;
  j["brightness_range"] = cfg.brightness_range;
  const auto& ph = cfg.physics;
  j["physics"] = {{"gravity", ph.gravity},
                  {"side", ph.side},
                  {"mass", ph.mass},
                  {"friction_mu", ph.friction_mu},
                  {"restitution", ph.restitution},
                  {"dt", ph.dt},
                  {"solver_iters", ph.solver_iters},
                  {"baumgarte_beta", ph.baumgarte_beta},
                  {"slop", ph.slop},
                  {"sim_duration", ph.sim_duration}};
  return j;
}

GenConfig load_gen_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    invalid(path + ": " + e.what());
  }
  return gen_config_from_json(j);
}

}  // namespace blocktower::scenegen
