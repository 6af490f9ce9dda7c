#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "blocktower/common/error.hpp"
#include "blocktower/eval/metrics.hpp"

namespace blocktower::eval {

void MaskEvalBatch::validate() const {
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "mask batch is empty");
  if (labels.size() != probs.size())
    throw Error(ErrorCode::kShapeMismatch, "mask batch has mismatched label/prediction counts");
  if (pixels == 0) throw Error(ErrorCode::kShapeMismatch, "mask batch has zero pixels");
}

double example_mask_iou(const uint8_t* label, const float* probs, std::size_t pixels) {
  std::array<std::size_t, kClasses> inter{};
  std::array<std::size_t, kClasses> in_label{};
  std::array<std::size_t, kClasses> in_pred{};
  for (std::size_t p = 0; p < pixels; ++p) {
    int best = 0;
    float best_q = probs[p];
    for (int c = 1; c < kClasses; ++c) {
      const float q = probs[c * pixels + p];
      if (q > best_q) {
        best_q = q;
        best = c;
      }
    }
    const int m = label[p];
    ++in_label[m];
    ++in_pred[best];
    if (m == best) ++inter[m];
  }
  double sum = 0.0;
  int present = 0;
  for (int c = 1; c < kClasses; ++c) {
    if (in_label[c] == 0) continue;
    ++present;
    const std::size_t uni = in_label[c] + in_pred[c] - inter[c];
    sum += static_cast<double>(inter[c]) / static_cast<double>(uni);
  }
  if (present == 0) throw Error(ErrorCode::kEmptyForeground, "mask label has no foreground class");
  return sum / present;
}

double log_likelihood_sum(const uint8_t* label, const float* probs, std::size_t pixels) {
  double sum = 0.0;
  for (std::size_t p = 0; p < pixels; ++p)
    sum += std::log(std::max(static_cast<double>(probs[label[p] * pixels + p]), kProbClamp));
  return sum;
}

void MaskMetrics::add(const uint8_t* label, const float* probs, std::size_t pixels) {
  if (n_ > 0 && pixels != pixels_)
    throw Error(ErrorCode::kShapeMismatch, "mask sizes differ within one evaluation");
  pixels_ = pixels;
  iou_sum_ += example_mask_iou(label, probs, pixels);
  ll_sum_ += log_likelihood_sum(label, probs, pixels);
  ++n_;
}

double MaskMetrics::miou() const {
  return n_ == 0 ? std::numeric_limits<double>::quiet_NaN() : iou_sum_ / static_cast<double>(n_);
}

double MaskMetrics::ll_per_px() const {
  return n_ == 0 ? std::numeric_limits<double>::quiet_NaN()
                 : ll_sum_ / (static_cast<double>(n_) * static_cast<double>(pixels_));
}

double mean_mask_iou(const MaskEvalBatch& batch) {
  batch.validate();
  double sum = 0.0;
  for (std::size_t n = 0; n < batch.labels.size(); ++n)
    sum += example_mask_iou(batch.labels[n], batch.probs[n], batch.pixels);
  return sum / static_cast<double>(batch.labels.size());
}

double log_likelihood_per_pixel(const MaskEvalBatch& batch) {
  batch.validate();
  double sum = 0.0;
  for (std::size_t n = 0; n < batch.labels.size(); ++n)
    sum += log_likelihood_sum(batch.labels[n], batch.probs[n], batch.pixels);
  return sum / (static_cast<double>(batch.labels.size()) * static_cast<double>(batch.pixels));
}

std::array<double, kClasses> class_constant_baseline(std::span<const uint8_t* const> labels,
                                                     std::size_t pixels) {
  if (labels.empty() || pixels == 0)
    throw Error(ErrorCode::kInvalidArgument, "class-constant baseline needs labels");
  std::array<std::size_t, kClasses> counts{};
  for (const uint8_t* m : labels)
    for (std::size_t p = 0; p < pixels; ++p) {
      if (m[p] >= kClasses) throw Error(ErrorCode::kInvalidArgument, "mask class id out of range");
      ++counts[m[p]];
    }
  const double total = static_cast<double>(labels.size()) * static_cast<double>(pixels);
  std::array<double, kClasses> f{};
  for (int c = 0; c < kClasses; ++c) f[c] = static_cast<double>(counts[c]) / total;
  return f;
}

std::vector<float> broadcast_distribution(const std::array<double, kClasses>& dist,
                                          std::size_t pixels) {
  std::vector<float> out(kClasses * pixels);
  for (int c = 0; c < kClasses; ++c)
    std::fill(out.begin() + c * pixels, out.begin() + (c + 1) * pixels, static_cast<float>(dist[c]));
  return out;
}

std::vector<float> one_hot(const uint8_t* mask, std::size_t pixels) {
  std::vector<float> out(kClasses * pixels, 0.0f);
  for (std::size_t p = 0; p < pixels; ++p) out[mask[p] * pixels + p] = 1.0f;
  return out;
}

double binomial_ci(double accuracy, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "binomial_ci needs n >= 1");
  if (!(accuracy >= 0.0 && accuracy <= 1.0))
    throw Error(ErrorCode::kInvalidArgument, "accuracy must lie in [0, 1]");
  return std::sqrt(accuracy * (1.0 - accuracy) / static_cast<double>(n));
}

RocCurve roc_curve(std::span<const double> confidences, std::span<const uint8_t> labels) {
  if (confidences.size() != labels.size())
    throw Error(ErrorCode::kInvalidArgument, "confidences and labels differ in length");
  std::size_t pos = 0;
  for (uint8_t l : labels) pos += l ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0)
    throw Error(ErrorCode::kDegenerateLabels, "ROC needs at least one positive and one negative");

  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return confidences[a] > confidences[b]; });
  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = confidences[order[i]];
    for (; i < order.size() && confidences[order[i]] == thr; ++i) (labels[order[i]] ? tp : fp)++;
    const RocPoint pt{thr, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos};
    const RocPoint& prev = roc.points.back();
    roc.auc += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) * 0.5;
    roc.points.push_back(pt);
  }
  return roc;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error(ErrorCode::kInvalidArgument, "pearson needs two equal-length vectors of size >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::kConstantInput, "pearson of a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace blocktower::eval
