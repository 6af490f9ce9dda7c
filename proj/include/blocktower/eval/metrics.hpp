#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace blocktower::eval {

inline constexpr int kClasses = 5;
inline constexpr double kProbClamp = 1e-12;

// N label grids and N per-pixel class distributions of the same size.
// Distributions are planar (kClasses, pixels).
struct MaskEvalBatch {
  std::size_t pixels = 0;
  std::vector<const uint8_t*> labels;
  std::vector<const float*> probs;

  void validate() const;
};

// Per-example IoU averaged over the foreground classes present in the label,
// against the argmax-binarised prediction (ties go to the lower class id).
// Throws Error(kEmptyForeground) when a label has no foreground.
double example_mask_iou(const uint8_t* label, const float* probs, std::size_t pixels);
double mean_mask_iou(const MaskEvalBatch& batch);

// Sum over pixels of ln max(q(correct), 1e-12).
double log_likelihood_sum(const uint8_t* label, const float* probs, std::size_t pixels);
// Mean over all pixels of all examples.
double log_likelihood_per_pixel(const MaskEvalBatch& batch);

// Streaming form of the two mask metrics.
class MaskMetrics {
 public:
  void add(const uint8_t* label, const float* probs, std::size_t pixels);
  std::size_t count() const { return n_; }
  double miou() const;
  double ll_per_px() const;

 private:
  std::size_t n_ = 0;
  std::size_t pixels_ = 0;
  double iou_sum_ = 0.0;
  double ll_sum_ = 0.0;
};

// Empirical class frequencies over every pixel of every label grid.
std::array<double, kClasses> class_constant_baseline(std::span<const uint8_t* const> labels,
                                                     std::size_t pixels);
// The baseline broadcast to a planar (kClasses, pixels) distribution.
std::vector<float> broadcast_distribution(const std::array<double, kClasses>& dist,
                                          std::size_t pixels);
// One-hot planar distribution from a class-id grid.
std::vector<float> one_hot(const uint8_t* mask, std::size_t pixels);

// sqrt(p (1 - p) / n).
double binomial_ci(double accuracy, std::size_t n);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // starts at (0, 0), ends at (1, 1)
  double auc = 0.0;
};

// Sweeps the distinct confidence values in descending order (tied
// confidences enter together); AUC by the trapezoid rule. Throws
// Error(kDegenerateLabels) unless both classes are present.
RocCurve roc_curve(std::span<const double> confidences, std::span<const uint8_t> labels);

// Throws Error(kConstantInput) for a constant vector and
// Error(kInvalidArgument) for mismatched or too-short inputs.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace blocktower::eval
