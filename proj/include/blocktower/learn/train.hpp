#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blocktower/dataset.hpp"
#include "blocktower/learn/model.hpp"

namespace blocktower::learn {

struct TrainConfig {
  std::vector<double> lr_grid{0.1, 0.03, 0.01};
  double momentum = 0.9;
  int batch_size = 32;
  int epochs = 10;  // 0 returns the initialisation
  uint64_t seed = 1;
  int jobs = 1;

  void validate() const;
};

// Non-owning view of one training example.
struct TrainExample {
  const float* image = nullptr;  // planar (3, H, W)
  SampleLabel label;
  int n_blocks = 0;
};

std::vector<TrainExample> make_examples(std::span<const dataset::LoadedRecord> records);

struct LogEntry {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean training loss over the epoch
  double train_acc = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;  // fall BCE on the validation slice
  std::string status = "ok";  // or "non_finite_loss"
};

nlohmann::ordered_json log_entry_to_json(const LogEntry& e);

struct TrainResult {
  std::unique_ptr<Model<float>> model;
  std::vector<LogEntry> log;
  double selected_lr = 0.0;
  int selected_epoch = 0;  // 0 when the initialisation was kept
  double selected_val_acc = 0.0;
};

// True for records in the validation slice (every tenth example).
inline bool is_validation_index(std::size_t i) { return i % 10 == 9; }

// Grid search over learning rates. Every grid point starts from the same
// seeded initialisation and sees the same per-epoch shuffles; the kept
// weights are those with the best validation fall accuracy over all
// (lr, epoch) pairs, ties going to lower validation loss, then to the
// earlier pair. A non-finite batch loss ends that grid point and is logged.
// Throws Error(kEmptyTrainSet) when there is nothing to train on.
TrainResult train(const ModelConfig& model_cfg, std::span<const TrainExample> examples,
                  const TrainConfig& cfg, const LossConfig& loss_cfg,
                  const std::function<void(const LogEntry&)>& on_epoch = {});

// Fraction of examples whose thresholded fall probability (p >= 0.5 means
// fall) matches the label.
double fall_accuracy(const Model<float>& model, std::span<const TrainExample> examples, int jobs = 1);

// Fall probabilities for each example, in order.
std::vector<float> predict_fall(const Model<float>& model, std::span<const TrainExample> examples,
                                int jobs = 1);

}  // namespace blocktower::learn
