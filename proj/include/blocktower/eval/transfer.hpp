#pragma once

#include <memory>
#include <set>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "blocktower/eval/report.hpp"
#include "blocktower/learn/train.hpp"

namespace blocktower::eval {

struct TransferConfig {
  std::set<int> train_sizes{2, 3, 4};
  learn::ModelConfig model;
  learn::TrainConfig train;
  learn::LossConfig loss;
};

struct SizeTransfer {
  int n_blocks = 0;
  bool held_out = false;
  EvalReport report;
};

struct TransferResult {
  std::set<int> train_sizes;
  std::size_t train_count = 0;
  double selected_lr = 0.0;
  int selected_epoch = 0;
  std::vector<learn::LogEntry> log;
  std::unique_ptr<learn::Model<float>> model;
  std::vector<SizeTransfer> sizes;  // 2, 3, 4 when present in the test records
};

// Trains on the train records whose size is in `train_sizes` and evaluates
// each test tower size separately, flagging sizes that were not trained on.
// Throws Error(kInvalidArgument) for sizes outside {2, 3, 4} or an empty set.
TransferResult transfer_protocol(std::span<const dataset::LoadedRecord> train_records,
                                 std::span<const dataset::LoadedRecord> test_records,
                                 const TransferConfig& cfg, const EvalOptions& opts = {});

// Evaluates an existing model per size with the same held-out flags.
std::vector<SizeTransfer> evaluate_by_size(const learn::Model<float>& model,
                                           std::span<const dataset::LoadedRecord> test_records,
                                           const std::set<int>& train_sizes,
                                           const EvalOptions& opts = {});

nlohmann::ordered_json transfer_to_json(const TransferResult& r);

}  // namespace blocktower::eval
