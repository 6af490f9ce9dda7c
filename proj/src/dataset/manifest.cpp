#include <cmath>
#include <fstream>
#include <limits>

#include "blocktower/common/error.hpp"
#include "blocktower/dataset.hpp"

namespace blocktower::dataset {

nlohmann::ordered_json record_to_json(const DatasetRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["seed"] = r.seed;
  j["n_blocks"] = r.n_blocks;
  j["fell"] = r.fell;
  j["margin"] = std::isfinite(r.margin) ? nlohmann::ordered_json(r.margin) : nlohmann::ordered_json(nullptr);
  j["split"] = scenegen::split_name(r.split);
  j["image_path"] = r.image_path;
  j["outcome_image_path"] = r.outcome_image_path;
  j["mask_paths"] = r.mask_paths;
  j["trajectory_path"] = r.trajectory_path;
  return j;
}

DatasetRecord record_from_json(const nlohmann::json& j, const std::string& source) {
  DatasetRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.n_blocks = j.at("n_blocks").get<int>();
    r.fell = j.at("fell").get<bool>();
    r.margin = j.at("margin").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                        : j.at("margin").get<double>();
    const auto split = j.at("split").get<std::string>();
    if (split != "train" && split != "test") throw Error(ErrorCode::kCorruptFile, source + ": bad split");
    r.split = split == "train" ? Split::kTrain : Split::kTest;
    r.image_path = j.at("image_path").get<std::string>();
    r.outcome_image_path = j.value("outcome_image_path", "");
    r.mask_paths = j.value("mask_paths", std::vector<std::string>{});
    r.trajectory_path = j.value("trajectory_path", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptFile, source + ": " + e.what());
  }
  if (r.id.empty() || r.id.find('/') != std::string::npos || r.id.find("..") != std::string::npos)
    throw Error(ErrorCode::kCorruptFile, source + ": bad record id");
  if (!r.mask_paths.empty() && !r.has_masks())
    throw Error(ErrorCode::kCorruptFile, source + ": expected 4 mask paths");
  return r;
}

Manifest read_manifest(const std::string& dir) {
  const std::string manifest_path = dir + "/" + kManifestFile;
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kMissingFile, manifest_path);

  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = manifest_path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kCorruptFile, where + ": " + e.what());
    }
    m.records.push_back(record_from_json(j, where));
  }

  const std::string info_path = dir + "/" + kDatasetInfoFile;
  std::ifstream info(info_path);
  if (info) {
    try {
      const auto j = nlohmann::ordered_json::parse(info);
      m.format_version = j.at("format_version").get<int>();
      m.gen_config = j.value("gen_config", nlohmann::ordered_json());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kCorruptFile, info_path + ": " + e.what());
    }
    if (m.format_version != kFormatVersion)
      throw Error(ErrorCode::kCorruptFile, info_path + ": unsupported format version");
  }
  return m;
}

SplitFilter parse_split_filter(std::string_view name) {
  if (name == "train") return SplitFilter::kTrain;
  if (name == "test") return SplitFilter::kTest;
  if (name == "all") return SplitFilter::kAll;
  throw Error(ErrorCode::kInvalidArgument, "split must be train, test or all");
}

}  // namespace blocktower::dataset
