#include <algorithm>

#include <Eigen/Core>

#include "blocktower/common/error.hpp"
#include "blocktower/learn/layers.hpp"
#include "nets.hpp"

namespace blocktower::learn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using ConstMapVec = Eigen::Map<const Vec<T>>;

// Fall head: logistic regression on centred pixels. Mask head: a linear map
// to per-pixel class logits, either direct or through a bottleneck.
template <typename T>
class LogReg final : public Model<T> {
 public:
  explicit LogReg(const ModelConfig& cfg);

  void forward(const T* images, std::size_t n, T* fall_probs, T* mask_probs,
               int jobs) const override;
  double loss(const T* images, std::span<const SampleLabel> labels, const LossConfig& lc, T* grad,
              int jobs) const override;
  std::size_t feature_dim() const override { return this->image_size(); }
  void features(const T* image, T* out) const override;

 private:
  bool factored() const { return this->cfg_.kind == ModelKind::kLogRegFactored; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(this->image_size()); }
  Eigen::Index mask_dim() const { return static_cast<Eigen::Index>(this->mask_output_size()); }
  RowMat<T> centred(const T* images, std::size_t n) const;
  // Mask logits (n, M) and, when factored, the bottleneck activations.
  RowMat<T> mask_logits(const RowMat<T>& x, RowMat<T>* hidden) const;
  ConstMapMat<T> weight(std::size_t index, Eigen::Index rows, Eigen::Index cols) const {
    return ConstMapMat<T>(this->param(index), rows, cols);
  }

  std::size_t fall_idx_ = 0;
  std::size_t mask_idx_ = 0;  // enc (factored) or direct map
  std::size_t dec_idx_ = 0;
};

template <typename T>
LogReg<T>::LogReg(const ModelConfig& cfg) : Model<T>(cfg) {
  const int d = static_cast<int>(this->image_size());
  const int m = static_cast<int>(this->mask_output_size());
  fall_idx_ = this->specs_.size();
  this->add_param("fall.weight", {1, d}, d);
  this->add_param("fall.bias", {1}, 0);
  mask_idx_ = this->specs_.size();
  if (factored()) {
    const int k = cfg.factor_dim;
    this->add_param("mask.enc.weight", {k, d}, d);
    this->add_param("mask.enc.bias", {k}, 0);
    dec_idx_ = this->specs_.size();
    this->add_param("mask.dec.weight", {m, k}, k);
    this->add_param("mask.dec.bias", {m}, 0);
  } else {
    const std::size_t count = static_cast<std::size_t>(m) * d;
    if (count > cfg.max_params)
      throw Error(ErrorCode::kInvalidConfig,
                  "unfactored mask map needs " + std::to_string(count) +
                      " parameters, above the limit of " + std::to_string(cfg.max_params) +
                      "; use the factored model or a smaller input");
    this->add_param("mask.weight", {m, d}, d);
    this->add_param("mask.bias", {m}, 0);
  }
  this->finalize_params();
}

template <typename T>
RowMat<T> LogReg<T>::centred(const T* images, std::size_t n) const {
  RowMat<T> x = ConstMapMat<T>(images, static_cast<Eigen::Index>(n), dim());
  x.array() -= T(0.5);
  return x;
}

template <typename T>
RowMat<T> LogReg<T>::mask_logits(const RowMat<T>& x, RowMat<T>* hidden) const {
  RowMat<T> logits;
  if (factored()) {
    const Eigen::Index k = this->cfg_.factor_dim;
    RowMat<T> h = x * weight(mask_idx_, k, dim()).transpose();
    h.rowwise() += ConstMapVec<T>(this->param(mask_idx_ + 1), k).transpose();
    logits = h * weight(dec_idx_, mask_dim(), k).transpose();
    logits.rowwise() += ConstMapVec<T>(this->param(dec_idx_ + 1), mask_dim()).transpose();
    if (hidden != nullptr) *hidden = std::move(h);
  } else {
    logits = x * weight(mask_idx_, mask_dim(), dim()).transpose();
    logits.rowwise() += ConstMapVec<T>(this->param(mask_idx_ + 1), mask_dim()).transpose();
  }
  return logits;
}

template <typename T>
void LogReg<T>::forward(const T* images, std::size_t n, T* fall_probs, T* mask_probs, int) const {
  constexpr std::size_t kChunk = 64;
  const int pixels = static_cast<int>(this->pixels());
  const std::size_t msz = this->mask_output_size();
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(kChunk, n - begin);
    const RowMat<T> x = centred(images + begin * this->image_size(), count);
    const Vec<T> z = x * ConstMapVec<T>(this->param(fall_idx_), dim());
    for (std::size_t i = 0; i < count; ++i)
      fall_probs[begin + i] = sigmoid(z(static_cast<Eigen::Index>(i)) + this->param(fall_idx_ + 1)[0]);
    if (mask_probs == nullptr) continue;
    const RowMat<T> logits = mask_logits(x, nullptr);
    for (std::size_t i = 0; i < count; ++i) {
      for (int t = 0; t < kMaskSteps; ++t) {
        const std::size_t off = static_cast<std::size_t>(t) * kClasses * pixels;
        softmax_cross_entropy<T>(logits.data() + i * msz + off, kClasses, pixels, nullptr,
                                 mask_probs + (begin + i) * msz + off, nullptr, T(0));
      }
    }
  }
}

template <typename T>
void LogReg<T>::features(const T* image, T* out) const {
  for (std::size_t i = 0; i < this->image_size(); ++i) out[i] = image[i] - T(0.5);
}

template <typename T>
double LogReg<T>::loss(const T* images, std::span<const SampleLabel> labels, const LossConfig& lc,
                       T* grad, int) const {
  lc.validate();
  const std::size_t n = labels.size();
  if (n == 0) throw Error(ErrorCode::kShapeMismatch, "empty batch");
  const auto rows = static_cast<Eigen::Index>(n);
  const T inv_n = T(1) / static_cast<T>(n);
  const int pixels = static_cast<int>(this->pixels());
  const std::size_t msz = this->mask_output_size();
  const RowMat<T> x = centred(images, n);

  double total = 0.0;
  const Vec<T> z = x * ConstMapVec<T>(this->param(fall_idx_), dim());
  Vec<T> dz(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    T d = 0;
    total += static_cast<double>(
        bce_with_logit(z(i) + this->param(fall_idx_ + 1)[0], labels[i].fell, &d));
    dz(i) = d * inv_n;
  }

  if (grad != nullptr) {
    std::fill(grad, grad + this->param_count(), T(0));
    const ParamSpec& fw = this->specs_[fall_idx_];
    Eigen::Map<Vec<T>>(grad + fw.offset, dim()).noalias() = x.transpose() * dz;
    grad[this->specs_[fall_idx_ + 1].offset] = dz.sum();
  }

  const bool any_masks =
      lc.lambda_mask > 0.0 &&
      std::any_of(labels.begin(), labels.end(), [](const SampleLabel& l) { return l.has_masks(); });
  if (any_masks) {
    RowMat<T> hidden;
    const RowMat<T> logits = mask_logits(x, &hidden);
    RowMat<T> dlogits = RowMat<T>::Zero(rows, mask_dim());
    std::vector<T> probs(static_cast<std::size_t>(kClasses) * pixels);
    const T scale = static_cast<T>(lc.lambda_mask) * inv_n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!labels[i].has_masks()) continue;
      for (int t = 0; t < kMaskSteps; ++t) {
        const std::size_t off = i * msz + static_cast<std::size_t>(t) * kClasses * pixels;
        total += lc.lambda_mask *
                 static_cast<double>(softmax_cross_entropy<T>(
                     logits.data() + off, kClasses, pixels, labels[i].masks[t], probs.data(),
                     grad != nullptr ? dlogits.data() + off : nullptr, scale));
      }
    }
    if (grad != nullptr) {
      auto gmat = [&](std::size_t index, Eigen::Index r, Eigen::Index c) {
        return MapMat<T>(grad + this->specs_[index].offset, r, c);
      };
      auto gvec = [&](std::size_t index, Eigen::Index r) {
        return Eigen::Map<Vec<T>>(grad + this->specs_[index].offset, r);
      };
      if (factored()) {
        const Eigen::Index k = this->cfg_.factor_dim;
        gmat(dec_idx_, mask_dim(), k).noalias() = dlogits.transpose() * hidden;
        gvec(dec_idx_ + 1, mask_dim()) = dlogits.colwise().sum().transpose();
        const RowMat<T> dh = dlogits * weight(dec_idx_, mask_dim(), k);
        gmat(mask_idx_, k, dim()).noalias() = dh.transpose() * x;
        gvec(mask_idx_ + 1, k) = dh.colwise().sum().transpose();
      } else {
        gmat(mask_idx_, mask_dim(), dim()).noalias() = dlogits.transpose() * x;
        gvec(mask_idx_ + 1, mask_dim()) = dlogits.colwise().sum().transpose();
      }
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

template <typename T>
std::unique_ptr<Model<T>> make_logreg(const ModelConfig& cfg) {
  return std::make_unique<LogReg<T>>(cfg);
}

template std::unique_ptr<Model<float>> make_logreg<float>(const ModelConfig&);
template std::unique_ptr<Model<double>> make_logreg<double>(const ModelConfig&);

}  // namespace blocktower::learn
