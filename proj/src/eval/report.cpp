#include <algorithm>
#include <cmath>
#include <limits>

#include "blocktower/common/error.hpp"
#include "blocktower/eval/report.hpp"
#include "blocktower/learn/knn.hpp"

namespace blocktower::eval {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::ordered_json num(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

std::vector<float> knn_features(const learn::Model<float>& model,
                                std::span<const dataset::LoadedRecord> records, KnnFeatures kind,
                                std::size_t& dim) {
  if (kind == KnnFeatures::kRaw) {
    dim = model.image_size();
    std::vector<float> out;
    out.reserve(records.size() * dim);
    for (const auto& r : records) out.insert(out.end(), r.image.begin(), r.image.end());
    return out;
  }
  dim = model.feature_dim();
  std::vector<float> out(records.size() * dim);
  for (std::size_t i = 0; i < records.size(); ++i)
    model.features(records[i].image.data(), out.data() + i * dim);
  return out;
}

}  // namespace

KnnFeatures parse_knn_features(std::string_view name) {
  if (name == "raw") return KnnFeatures::kRaw;
  if (name == "trunk") return KnnFeatures::kTrunk;
  if (name == "none") return KnnFeatures::kNone;
  throw Error(ErrorCode::kInvalidArgument, "unknown kNN feature kind '" + std::string(name) + "'");
}

EvalReport evaluate(const learn::Model<float>& model, std::span<const dataset::LoadedRecord> records,
                    const EvalOptions& opts) {
  if (records.empty()) throw Error(ErrorCode::kInvalidArgument, "nothing to evaluate");
  const std::size_t pixels = model.pixels();
  const std::size_t isz = model.image_size();
  for (const auto& r : records)
    if (r.image.size() != isz)
      throw Error(ErrorCode::kShapeMismatch, r.record.id + ": image size does not match the model");

  EvalReport rep;
  rep.model_kind = std::string(learn::model_kind_name(model.config().kind));
  rep.count = records.size();

  MaskMetrics overall;
  std::array<MaskMetrics, 4> by_time;
  std::array<MaskMetrics, 5> by_size;
  MaskMetrics t0_baseline;
  std::vector<double> probs(records.size());

  constexpr std::size_t kChunk = 32;
  const std::size_t msz = model.mask_output_size();
  std::vector<float> images;
  std::vector<float> fall;
  std::vector<float> masks;
  for (std::size_t begin = 0; begin < records.size(); begin += kChunk) {
    const std::size_t n = std::min(kChunk, records.size() - begin);
    images.resize(n * isz);
    bool any_masks = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = records[begin + i];
      std::copy(r.image.begin(), r.image.end(), images.begin() + static_cast<std::ptrdiff_t>(i * isz));
      any_masks |= !r.masks[0].empty();
    }
    fall.resize(n);
    masks.resize(any_masks ? n * msz : 0);
    model.forward(images.data(), n, fall.data(), any_masks ? masks.data() : nullptr, opts.jobs);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = records[begin + i];
      probs[begin + i] = fall[i];
      if (r.masks[0].empty()) continue;
      if (r.masks[3].size() != pixels)
        throw Error(ErrorCode::kShapeMismatch, r.record.id + ": mask size does not match the model");
      const float* out = masks.data() + i * msz;
      for (int t = 0; t < 4; ++t) by_time[t].add(r.masks[t].data(), out + t * kClasses * pixels, pixels);
      const float* final_probs = out + 3 * kClasses * pixels;
      overall.add(r.masks[3].data(), final_probs, pixels);
      if (r.record.n_blocks >= 2 && r.record.n_blocks <= 4)
        by_size[r.record.n_blocks].add(r.masks[3].data(), final_probs, pixels);
      const std::vector<float> t0 = one_hot(r.masks[0].data(), pixels);
      t0_baseline.add(r.masks[3].data(), t0.data(), pixels);
    }
  }

  std::vector<uint8_t> labels(records.size());
  std::array<std::size_t, 5> size_count{};
  std::array<std::size_t, 5> size_correct{};
  std::size_t correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i].record;
    const bool pred = probs[i] >= 0.5;
    labels[i] = r.fell ? 1 : 0;
    if (pred && r.fell) ++rep.confusion.tp;
    if (pred && !r.fell) ++rep.confusion.fp;
    if (!pred && !r.fell) ++rep.confusion.tn;
    if (!pred && r.fell) ++rep.confusion.fn;
    const bool ok = pred == r.fell;
    correct += ok ? 1 : 0;
    if (r.n_blocks >= 2 && r.n_blocks <= 4) {
      ++size_count[r.n_blocks];
      size_correct[r.n_blocks] += ok ? 1 : 0;
    }
    rep.examples.push_back({r.id, r.n_blocks, r.fell, probs[i]});
  }
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  rep.accuracy_ci = binomial_ci(rep.accuracy, records.size());
  for (int n = 2; n <= 4; ++n) {
    if (size_count[n] == 0) continue;
    SizeReport s;
    s.n_blocks = n;
    s.held_out = opts.held_out_sizes.contains(n);
    s.count = size_count[n];
    s.accuracy = static_cast<double>(size_correct[n]) / static_cast<double>(size_count[n]);
    s.accuracy_ci = binomial_ci(s.accuracy, size_count[n]);
    s.mask_count = by_size[n].count();
    s.miou = by_size[n].miou();
    s.ll_per_px = by_size[n].ll_per_px();
    rep.per_size.push_back(s);
  }
  rep.mask_count = overall.count();
  rep.miou = overall.miou();
  rep.ll_per_px = overall.ll_per_px();
  for (int t = 0; t < 4; ++t) rep.ll_per_px_by_time[t] = by_time[t].ll_per_px();

  const bool both = std::find(labels.begin(), labels.end(), 1) != labels.end() &&
                    std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (both) rep.roc = roc_curve(probs, labels);

  if (overall.count() > 0 || opts.knn != KnnFeatures::kNone) {
    BaselineReport b;
    b.class_constant_ll = kNaN;
    b.mask_t0_miou = kNaN;
    b.mask_t0_ll = kNaN;
    if (overall.count() > 0) {
      if (opts.class_constant) {
        b.class_constant_dist = *opts.class_constant;
      } else {
        std::vector<const uint8_t*> finals;
        for (const auto& r : records)
          if (!r.masks[3].empty()) finals.push_back(r.masks[3].data());
        b.class_constant_dist = class_constant_baseline(finals, pixels);
      }
      const std::vector<float> cc = broadcast_distribution(b.class_constant_dist, pixels);
      double ll = 0.0;
      std::size_t n = 0;
      for (const auto& r : records)
        if (!r.masks[3].empty()) {
          ll += log_likelihood_sum(r.masks[3].data(), cc.data(), pixels);
          ++n;
        }
      b.class_constant_ll = ll / (static_cast<double>(n) * static_cast<double>(pixels));
      b.mask_t0_miou = t0_baseline.miou();
      b.mask_t0_ll = t0_baseline.ll_per_px();
    }
    if (opts.knn != KnnFeatures::kNone) {
      if (opts.knn_train.empty()) throw Error(ErrorCode::kEmptyTrainSet, "kNN needs training records");
      std::size_t dim = 0;
      const std::vector<float> train = knn_features(model, opts.knn_train, opts.knn, dim);
      const std::vector<float> query = knn_features(model, records, opts.knn, dim);
      std::vector<uint8_t> train_fell;
      for (const auto& r : opts.knn_train) train_fell.push_back(r.record.fell ? 1 : 0);
      const std::vector<double> p =
          learn::knn_predict(train, train_fell, query, dim, opts.knn_k, opts.jobs);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < p.size(); ++i) ok += ((p[i] >= 0.5) == records[i].record.fell) ? 1 : 0;
      b.knn_accuracy = static_cast<double>(ok) / static_cast<double>(p.size());
      b.knn_features = opts.knn == KnnFeatures::kRaw ? "raw" : "trunk";
    }
    rep.baselines = b;
  }
  return rep;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model_kind"] = r.model_kind;
  j["count"] = r.count;
  j["accuracy"] = r.accuracy;
  j["accuracy_ci"] = r.accuracy_ci;
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
  j["per_size"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_size) {
    nlohmann::ordered_json e;
    e["n_blocks"] = s.n_blocks;
    e["held_out"] = s.held_out;
    e["count"] = s.count;
    e["accuracy"] = s.accuracy;
    e["accuracy_ci"] = s.accuracy_ci;
    e["mask_count"] = s.mask_count;
    e["miou"] = num(s.miou);
    e["ll_per_px"] = num(s.ll_per_px);
    j["per_size"].push_back(e);
  }
  j["mask_count"] = r.mask_count;
  j["miou"] = num(r.miou);
  j["ll_per_px"] = num(r.ll_per_px);
  j["ll_per_px_by_time"] = nlohmann::ordered_json::object();
  static constexpr const char* kTimes[4] = {"0", "1", "2", "4"};
  for (int t = 0; t < 4; ++t) j["ll_per_px_by_time"][kTimes[t]] = num(r.ll_per_px_by_time[t]);
  if (r.roc) {
    nlohmann::ordered_json roc;
    roc["auc"] = r.roc->auc;
    roc["points"] = nlohmann::ordered_json::array();
    for (const auto& p : r.roc->points)
      roc["points"].push_back({{"threshold", num(p.threshold)}, {"fpr", p.fpr}, {"tpr", p.tpr}});
    j["roc"] = roc;
  } else {
    j["roc"] = nullptr;
  }
  if (r.baselines) {
    const auto& b = *r.baselines;
    nlohmann::ordered_json bj;
    bj["class_constant"] = {{"distribution", b.class_constant_dist}, {"ll_per_px", num(b.class_constant_ll)}};
    bj["mask_t0"] = {{"miou", num(b.mask_t0_miou)}, {"ll_per_px", num(b.mask_t0_ll)}};
    if (b.knn_accuracy) bj["knn"] = {{"features", b.knn_features}, {"accuracy", *b.knn_accuracy}};
    j["baselines"] = bj;
  }
  j["examples"] = nlohmann::ordered_json::array();
  for (const auto& e : r.examples)
    j["examples"].push_back({{"id", e.id}, {"n_blocks", e.n_blocks}, {"fell", e.fell}, {"p_fall", e.p_fall}});
  return j;
}

}  // namespace blocktower::eval
