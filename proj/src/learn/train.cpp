#include <algorithm>
#include <cmath>
#include <limits>

#include "blocktower/common/error.hpp"
#include "blocktower/common/rng.hpp"
#include "blocktower/learn/layers.hpp"
#include "blocktower/learn/train.hpp"

namespace blocktower::learn {
namespace {

std::vector<float> gather_images(const Model<float>& model, std::span<const TrainExample> examples,
                                 std::span<const std::size_t> indices) {
  const std::size_t isz = model.image_size();
  std::vector<float> out(indices.size() * isz);
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy_n(examples[indices[i]].image, isz, out.begin() + static_cast<std::ptrdiff_t>(i * isz));
  return out;
}

struct SplitScore {
  double acc = 0.0;
  double bce = 0.0;
};

SplitScore score(const Model<float>& model, std::span<const TrainExample> examples,
                 std::span<const std::size_t> indices, int jobs) {
  if (indices.empty()) return {};
  constexpr std::size_t kChunk = 256;
  SplitScore s;
  std::vector<float> probs;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < indices.size(); begin += kChunk) {
    const auto chunk = indices.subspan(begin, std::min(kChunk, indices.size() - begin));
    const std::vector<float> images = gather_images(model, examples, chunk);
    probs.assign(chunk.size(), 0.0f);
    model.forward(images.data(), chunk.size(), probs.data(), nullptr, jobs);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const bool fell = examples[chunk[i]].label.fell;
      correct += ((probs[i] >= 0.5f) == fell) ? 1 : 0;
      const double p = std::clamp(static_cast<double>(probs[i]), 1e-12, 1.0 - 1e-12);
      s.bce -= fell ? std::log(p) : std::log(1.0 - p);
    }
  }
  s.acc = static_cast<double>(correct) / static_cast<double>(indices.size());
  s.bce /= static_cast<double>(indices.size());
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (lr_grid.empty()) throw Error(ErrorCode::kInvalidConfig, "lr grid is empty");
  for (double lr : lr_grid)
    if (!(lr > 0.0) || !std::isfinite(lr))
      throw Error(ErrorCode::kInvalidConfig, "learning rates must be finite and > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw Error(ErrorCode::kInvalidConfig, "momentum must lie in [0, 1)");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidConfig, "batch size must be >= 1");
  if (epochs < 0) throw Error(ErrorCode::kInvalidConfig, "epochs must be >= 0");
}

std::vector<TrainExample> make_examples(std::span<const dataset::LoadedRecord> records) {
  std::vector<TrainExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    TrainExample e;
    e.image = r.image.data();
    e.label.fell = r.record.fell;
    e.n_blocks = r.record.n_blocks;
    if (!r.masks[0].empty())
      for (int t = 0; t < kMaskSteps; ++t) e.label.masks[t] = r.masks[t].data();
    out.push_back(e);
  }
  return out;
}

nlohmann::ordered_json log_entry_to_json(const LogEntry& e) {
  nlohmann::ordered_json j;
  j["epoch"] = e.epoch;
  j["lr"] = e.lr;
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
  j["loss"] = num(e.loss);
  j["train_acc"] = e.train_acc;
  j["val_acc"] = e.val_acc;
  j["val_loss"] = num(e.val_loss);
  j["status"] = e.status;
  return j;
}

TrainResult train(const ModelConfig& model_cfg, std::span<const TrainExample> examples,
                  const TrainConfig& cfg, const LossConfig& loss_cfg,
                  const std::function<void(const LogEntry&)>& on_epoch) {
  cfg.validate();
  loss_cfg.validate();
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  for (std::size_t i = 0; i < examples.size(); ++i)
    (is_validation_index(i) ? val_idx : train_idx).push_back(i);
  if (train_idx.empty()) throw Error(ErrorCode::kEmptyTrainSet, "no training examples");

  auto model = make_model<float>(model_cfg);
  for (const auto& e : examples)
    if (e.image == nullptr) throw Error(ErrorCode::kShapeMismatch, "example without an image");
  model->init(derive_seed(cfg.seed, 0));
  const std::vector<float> init = model->params();

  TrainResult result;
  // Fall back to validation accuracy on the train slice when there is no
  // validation slice.
  const std::span<const std::size_t> select_idx = val_idx.empty() ? train_idx : val_idx;
  bool have_best = false;
  SplitScore best;
  std::vector<float> best_params = init;

  const std::size_t np = model->param_count();
  std::vector<float> grad(np);
  std::vector<float> velocity(np);
  std::vector<SampleLabel> labels;
  for (double lr : cfg.lr_grid) {
    model->params() = init;
    std::fill(velocity.begin(), velocity.end(), 0.0f);
    const float flr = static_cast<float>(lr);
    const float mu = static_cast<float>(cfg.momentum);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      std::vector<std::size_t> order = train_idx;
      Pcg32 rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch)));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.bounded(static_cast<uint32_t>(i))]);

      LogEntry entry;
      entry.epoch = epoch;
      entry.lr = lr;
      double loss_sum = 0.0;
      bool diverged = false;
      for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
        const auto batch = std::span<const std::size_t>(order).subspan(
            begin, std::min<std::size_t>(cfg.batch_size, order.size() - begin));
        const std::vector<float> images = gather_images(*model, examples, batch);
        labels.clear();
        for (std::size_t i : batch) labels.push_back(examples[i].label);
        const double l = model->loss(images.data(), labels, loss_cfg, grad.data(), cfg.jobs);
        if (!std::isfinite(l)) {
          diverged = true;
          break;
        }
        loss_sum += l * static_cast<double>(batch.size());
        auto& w = model->params();
        for (std::size_t p = 0; p < np; ++p) {
          velocity[p] = mu * velocity[p] + grad[p];
          w[p] -= flr * velocity[p];
        }
      }
      if (!diverged) {
        for (float v : model->params())
          if (!std::isfinite(v)) {
            diverged = true;
            break;
          }
      }
      if (diverged) {
        entry.loss = std::numeric_limits<double>::quiet_NaN();
        entry.val_loss = std::numeric_limits<double>::quiet_NaN();
        entry.status = "non_finite_loss";
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
        break;
      }
      entry.loss = loss_sum / static_cast<double>(order.size());
      const SplitScore tr = score(*model, examples, train_idx, cfg.jobs);
      const SplitScore va = val_idx.empty() ? tr : score(*model, examples, val_idx, cfg.jobs);
      entry.train_acc = tr.acc;
      entry.val_acc = va.acc;
      entry.val_loss = va.bce;
      result.log.push_back(entry);
      if (on_epoch) on_epoch(entry);

      const bool better = !have_best || va.acc > best.acc || (va.acc == best.acc && va.bce < best.bce);
      if (better) {
        have_best = true;
        best = va;
        best_params = model->params();
        result.selected_lr = lr;
        result.selected_epoch = epoch;
      }
    }
  }
  model->params() = best_params;
  result.selected_val_acc = have_best ? best.acc : score(*model, examples, select_idx, cfg.jobs).acc;
  result.model = std::move(model);
  return result;
}

std::vector<float> predict_fall(const Model<float>& model, std::span<const TrainExample> examples,
                                int jobs) {
  std::vector<std::size_t> idx(examples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<float> out(examples.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < idx.size(); begin += kChunk) {
    const auto chunk = std::span<const std::size_t>(idx).subspan(begin, std::min(kChunk, idx.size() - begin));
    const std::vector<float> images = gather_images(model, examples, chunk);
    model.forward(images.data(), chunk.size(), out.data() + begin, nullptr, jobs);
  }
  return out;
}

double fall_accuracy(const Model<float>& model, std::span<const TrainExample> examples, int jobs) {
  if (examples.empty()) return 0.0;
  const std::vector<float> p = predict_fall(model, examples, jobs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += ((p[i] >= 0.5f) == examples[i].label.fell) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(p.size());
}

}  // namespace blocktower::learn
