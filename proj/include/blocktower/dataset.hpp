#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blocktower/render.hpp"
#include "blocktower/scene_gen.hpp"

namespace blocktower::dataset {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kDatasetInfoFile = "dataset.json";

using scenegen::Split;

// Paths are relative to the dataset directory. Imported (non-simulated)
// records have empty mask and trajectory paths and a NaN margin.
struct DatasetRecord {
  std::string id;
  uint64_t seed = 0;
  int n_blocks = 0;
  bool fell = false;
  double margin = 0.0;
  Split split = Split::kTrain;
  std::string image_path;
  std::string outcome_image_path;
  std::vector<std::string> mask_paths;  // t = 0, 1, 2, 4 s
  std::string trajectory_path;

  bool has_masks() const { return mask_paths.size() == render::kMaskTimes.size(); }
};

nlohmann::ordered_json record_to_json(const DatasetRecord& r);
DatasetRecord record_from_json(const nlohmann::json& j, const std::string& source);

struct Manifest {
  int format_version = kFormatVersion;
  nlohmann::ordered_json gen_config;
  std::vector<DatasetRecord> records;
};

// Simulates, renders and persists each sample, then writes manifest.jsonl
// (one record per line, fixed key order) and dataset.json (format version
// and generator config). Files per record: <id>/img0.ppm, <id>/img4.ppm,
// <id>/mask{0,1,2,4}.pgm, <id>/traj.csv. Throws Error(kIoFailure) or
// Error(kConsistencyFailure) if a re-simulated label disagrees.
Manifest write_dataset(std::span<const scenegen::SceneSample> samples,
                       const scenegen::GenConfig& cfg, const std::string& out_dir, int jobs = 1);

// Adds an externally captured image as a record without masks or trajectory.
DatasetRecord import_image(const std::string& dir, const std::string& id, const render::Image& image,
                           int n_blocks, bool fell, Split split);

Manifest read_manifest(const std::string& dir);

enum class SplitFilter { kTrain, kTest, kAll };
SplitFilter parse_split_filter(std::string_view name);

struct LoadedRecord {
  DatasetRecord record;
  int width = 0;
  int height = 0;
  std::vector<float> image;  // planar (3, H, W), values in [0, 1]
  std::array<std::vector<uint8_t>, 4> masks;  // empty when the record has no masks
};

// Decodes records of the requested split in manifest order. Throws
// Error(kMissingFile) or Error(kCorruptFile) naming the offending path.
std::vector<LoadedRecord> load_dataset(const std::string& dir, SplitFilter split, int jobs = 1);

std::vector<float> image_to_planar(const render::Image& img);

struct VerifyReport {
  std::size_t records_checked = 0;
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
};

// Re-checks file presence, decodability, mask ranges, label/trajectory
// agreement, id uniqueness and per-cell counts.
VerifyReport verify_dataset(const std::string& dir, int jobs = 1);

}  // namespace blocktower::dataset
