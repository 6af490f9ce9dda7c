#pragma once

#include <array>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blocktower/dataset.hpp"
#include "blocktower/eval/metrics.hpp"
#include "blocktower/learn/model.hpp"

namespace blocktower::eval {

enum class KnnFeatures { kNone, kRaw, kTrunk };
KnnFeatures parse_knn_features(std::string_view name);

struct EvalOptions {
  int jobs = 1;
  // Class-constant distribution; when absent it is fitted on the evaluated
  // records' t = 4 s masks.
  std::optional<std::array<double, kClasses>> class_constant;
  KnnFeatures knn = KnnFeatures::kNone;
  std::span<const dataset::LoadedRecord> knn_train;
  int knn_k = 10;
  std::set<int> held_out_sizes;
};

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

struct ExampleResult {
  std::string id;
  int n_blocks = 0;
  bool fell = false;
  double p_fall = 0.0;
};

struct SizeReport {
  int n_blocks = 0;
  bool held_out = false;
  std::size_t count = 0;
  double accuracy = 0.0;
  double accuracy_ci = 0.0;
  std::size_t mask_count = 0;
  double miou = 0.0;       // NaN without masks
  double ll_per_px = 0.0;  // NaN without masks
};

struct BaselineReport {
  std::array<double, kClasses> class_constant_dist{};
  double class_constant_ll = 0.0;
  double mask_t0_miou = 0.0;
  double mask_t0_ll = 0.0;
  std::optional<double> knn_accuracy;
  std::string knn_features;
};

// Predicted fall iff p_fall >= 0.5. Mask metrics use the t = 4 s mask and
// skip records without masks.
struct EvalReport {
  std::string model_kind;
  std::size_t count = 0;
  double accuracy = 0.0;
  double accuracy_ci = 0.0;
  Confusion confusion;
  std::vector<SizeReport> per_size;
  std::size_t mask_count = 0;
  double miou = 0.0;
  double ll_per_px = 0.0;
  std::array<double, 4> ll_per_px_by_time{};
  std::optional<RocCurve> roc;  // absent when only one label occurs
  std::optional<BaselineReport> baselines;
  std::vector<ExampleResult> examples;
};

EvalReport evaluate(const learn::Model<float>& model, std::span<const dataset::LoadedRecord> records,
                    const EvalOptions& opts);

nlohmann::ordered_json report_to_json(const EvalReport& r);

}  // namespace blocktower::eval
