#include <filesystem>
#include <fstream>

#include "blocktower/common/error.hpp"
#include "blocktower/common/parallel.hpp"
#include "blocktower/dataset.hpp"

namespace blocktower::dataset {
namespace fs = std::filesystem;

namespace {

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::kIoFailure, "cannot create " + p.string() + ": " + ec.message());
}

void write_info(const std::string& dir, const nlohmann::ordered_json& gen_config) {
  nlohmann::ordered_json info;
  info["format_version"] = kFormatVersion;
  info["gen_config"] = gen_config;
  render::write_file(dir + "/" + kDatasetInfoFile, info.dump(2) + "\n");
}

void write_manifest(const std::string& dir, const std::vector<DatasetRecord>& records) {
  std::string text;
  for (const auto& r : records) text += record_to_json(r).dump() + "\n";
  render::write_file(dir + "/" + kManifestFile, text);
}

DatasetRecord write_one(const scenegen::SceneSample& s, const std::string& out_dir) {
  const physics::Trajectory traj = physics::simulate(s.scene);
  const bool fell = physics::fell_label(traj, s.scene.params);
  if (fell != s.label_fell) {
    throw Error(ErrorCode::kConsistencyFailure, s.id() + ": re-simulated label disagrees");
  }
  const double side = s.scene.params.side;
  const render::Camera cam =
      render::make_camera(s.n_blocks(), side, s.render.camera_scale, s.render.camera_shift);
  const render::RenderStyle style{s.render.background_gray, s.render.brightness};
  const auto frames = render::render_sequence(traj, s.scene.class_ids, side, cam, style);

  DatasetRecord r;
  r.id = s.id();
  r.seed = s.seed;
  r.n_blocks = s.n_blocks();
  r.fell = fell;
  r.margin = s.margin;
  r.split = s.split;
  r.image_path = r.id + "/img0.ppm";
  r.outcome_image_path = r.id + "/img4.ppm";
  r.mask_paths = {r.id + "/mask0.pgm", r.id + "/mask1.pgm", r.id + "/mask2.pgm", r.id + "/mask4.pgm"};
  r.trajectory_path = r.id + "/traj.csv";

  make_dir(fs::path(out_dir) / r.id);
  render::write_ppm(out_dir + "/" + r.image_path, frames[0].image);
  render::write_ppm(out_dir + "/" + r.outcome_image_path, frames[3].image);
  for (std::size_t k = 0; k < frames.size(); ++k)
    render::write_pgm(out_dir + "/" + r.mask_paths[k], frames[k].mask);
  render::write_file(out_dir + "/" + r.trajectory_path, physics::trajectory_to_csv(traj));
  return r;
}

}  // namespace

Manifest write_dataset(std::span<const scenegen::SceneSample> samples,
                       const scenegen::GenConfig& cfg, const std::string& out_dir, int jobs) {
  make_dir(out_dir);
  Manifest m;
  m.gen_config = scenegen::gen_config_to_json(cfg);
  m.records.resize(samples.size());
  parallel_for(samples.size(), jobs,
               [&](std::size_t i) { m.records[i] = write_one(samples[i], out_dir); });
  write_info(out_dir, m.gen_config);
  write_manifest(out_dir, m.records);
  return m;
}

DatasetRecord import_image(const std::string& dir, const std::string& id, const render::Image& image,
                           int n_blocks, bool fell, Split split) {
  Manifest m = read_manifest(dir);
  for (const auto& r : m.records)
    if (r.id == id) throw Error(ErrorCode::kInvalidArgument, "duplicate record id " + id);
  DatasetRecord r;
  r.id = id;
  r.n_blocks = n_blocks;
  r.fell = fell;
  r.margin = std::numeric_limits<double>::quiet_NaN();
  r.split = split;
  r.image_path = id + "/img0.ppm";
  make_dir(fs::path(dir) / id);
  render::write_ppm(dir + "/" + r.image_path, image);
  m.records.push_back(r);
  write_manifest(dir, m.records);
  return r;
}

}  // namespace blocktower::dataset
