#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <tuple>

#include "blocktower/common/error.hpp"
#include "blocktower/common/parallel.hpp"
#include "blocktower/dataset.hpp"

namespace blocktower::dataset {

std::vector<float> image_to_planar(const render::Image& img) {
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  std::vector<float> out(plane * 3);
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t c = 0; c < 3; ++c) out[c * plane + p] = static_cast<float>(img.data[p * 3 + c]) / 255.0f;
  return out;
}

std::vector<LoadedRecord> load_dataset(const std::string& dir, SplitFilter split, int jobs) {
  const Manifest m = read_manifest(dir);
  std::vector<const DatasetRecord*> selected;
  for (const auto& r : m.records) {
    if (split == SplitFilter::kAll || (split == SplitFilter::kTrain) == (r.split == Split::kTrain))
      selected.push_back(&r);
  }
  std::vector<LoadedRecord> out(selected.size());
  parallel_for(selected.size(), jobs, [&](std::size_t i) {
    LoadedRecord& lr = out[i];
    lr.record = *selected[i];
    const std::string image_path = dir + "/" + lr.record.image_path;
    const render::Image img = render::read_ppm(image_path);
    lr.width = img.width;
    lr.height = img.height;
    lr.image = image_to_planar(img);
    if (lr.record.has_masks()) {
      for (std::size_t k = 0; k < 4; ++k) {
        const std::string path = dir + "/" + lr.record.mask_paths[k];
        render::MaskImage mask = render::read_pgm(path);
        if (mask.width != img.width || mask.height != img.height)
          throw Error(ErrorCode::kCorruptFile, path + ": mask size differs from image");
        lr.masks[k] = std::move(mask.data);
      }
    }
  });
  return out;
}

VerifyReport verify_dataset(const std::string& dir, int jobs) {
  VerifyReport report;
  Manifest m;
  try {
    m = read_manifest(dir);
  } catch (const Error& e) {
    report.problems.push_back(e.what());
    return report;
  }
  std::mutex mu;
  auto problem = [&](const std::string& what) {
    std::lock_guard lock(mu);
    report.problems.push_back(what);
  };

  std::set<std::string> ids;
  for (const auto& r : m.records)
    if (!ids.insert(r.id).second) problem("duplicate id " + r.id);

  physics::PhysicsParams params;
  if (!m.gen_config.is_null()) {
    try {
      params = scenegen::gen_config_from_json(m.gen_config).physics;
    } catch (const Error& e) {
      problem(std::string("gen_config: ") + e.what());
    }
  }

  std::vector<std::string> per_record(m.records.size());
  parallel_for(m.records.size(), jobs, [&](std::size_t i) {
    const DatasetRecord& r = m.records[i];
    try {
      const render::Image img = render::read_ppm(dir + "/" + r.image_path);
      if (!r.outcome_image_path.empty()) {
        const render::Image out = render::read_ppm(dir + "/" + r.outcome_image_path);
        if (out.width != img.width || out.height != img.height)
          throw Error(ErrorCode::kCorruptFile, r.outcome_image_path + ": size differs");
      }
      for (const auto& p : r.mask_paths) {
        const render::MaskImage mask = render::read_pgm(dir + "/" + p);
        if (mask.width != img.width || mask.height != img.height)
          throw Error(ErrorCode::kCorruptFile, p + ": size differs");
      }
      if (!r.trajectory_path.empty()) {
        const std::string path = dir + "/" + r.trajectory_path;
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::kMissingFile, path);
        const physics::Trajectory traj = physics::parse_trajectory_csv(in, path);
        if (traj.frames.front().size() != static_cast<std::size_t>(r.n_blocks))
          throw Error(ErrorCode::kConsistencyFailure, r.id + ": block count differs from trajectory");
        if (physics::fell_label(traj, params) != r.fell)
          throw Error(ErrorCode::kConsistencyFailure, r.id + ": label disagrees with trajectory");
      }
    } catch (const Error& e) {
      per_record[i] = e.what();
    }
  });
  for (auto& p : per_record)
    if (!p.empty()) report.problems.push_back(std::move(p));

  // Per-cell counts, only meaningful for purely generated datasets.
  if (!m.gen_config.is_null()) {
    bool imported = false;
    std::map<std::tuple<int, int, bool>, int> counts;
    for (const auto& r : m.records) {
      imported |= r.trajectory_path.empty();
      ++counts[{static_cast<int>(r.split), r.n_blocks, r.fell}];
    }
    if (!imported) {
      try {
        const auto cfg = scenegen::gen_config_from_json(m.gen_config);
        for (Split split : {Split::kTrain, Split::kTest}) {
          const int want = split == Split::kTrain ? cfg.train_count_per_cell() : cfg.test_count_per_cell();
          for (int n = physics::kMinBlocks; n <= physics::kMaxBlocks; ++n) {
            for (bool fell : {true, false}) {
              const int have = counts[{static_cast<int>(split), n, fell}];
              if (have != want) {
                report.problems.push_back(std::string(scenegen::split_name(split)) + " n=" +
                                          std::to_string(n) + (fell ? " fell" : " stay") + ": " +
                                          std::to_string(have) + " records, expected " +
                                          std::to_string(want));
              }
            }
          }
        }
      } catch (const Error&) {
      }
    }
  }
  report.records_checked = m.records.size();
  return report;
}

}  // namespace blocktower::dataset
