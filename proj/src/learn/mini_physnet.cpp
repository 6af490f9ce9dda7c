#include <algorithm>
#include <cmath>

#include "blocktower/common/error.hpp"
#include "blocktower/common/parallel.hpp"
#include "blocktower/learn/layers.hpp"
#include "nets.hpp"

namespace blocktower::learn {
namespace {

constexpr int kTrunkChannels[4] = {3, 16, 32, 64};
constexpr int kHeadChannels[3] = {32, 16, kClasses};

template <typename T>
void add_into(T* dst, const T* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

template <typename T>
class MiniPhysNet final : public Model<T> {
 public:
  explicit MiniPhysNet(const ModelConfig& cfg);

  void forward(const T* images, std::size_t n, T* fall_probs, T* mask_probs,
               int jobs) const override;
  double loss(const T* images, std::span<const SampleLabel> labels, const LossConfig& lc, T* grad,
              int jobs) const override;
  std::size_t feature_dim() const override { return kTrunkChannels[3]; }
  void features(const T* image, T* out) const override;

 private:
  // A set of time steps that share the two upsampling stages.
  struct Branch {
    std::size_t up1 = 0;
    std::size_t up2 = 0;
    std::vector<int> steps;
  };

  struct Work {
    std::vector<T> x, a1, a2, a3, pooled;
    std::vector<T> h1, h2, logits, probs;
    std::vector<T> da1, da2, da3, tmp3, dh1, dh2, dtmp2, dlogits;
    std::vector<T> scratch;
  };

  Work make_work() const;
  void trunk(const T* image, Work& w) const;
  T fall_logit(Work& w) const;
  void branch_forward(const Branch& b, Work& w) const;
  double sample(const T* image, const SampleLabel& label, const LossConfig& lc, T* grad,
                Work& w) const;

  std::size_t grad_offset(std::size_t index) const { return this->specs_[index].offset; }

  ConvShape conv_[3];
  ConvShape up_[3];
  std::size_t conv_idx_[3] = {};
  std::size_t fall_idx_ = 0;
  std::size_t out_idx_[kMaskSteps] = {};
  std::vector<Branch> branches_;
};

template <typename T>
MiniPhysNet<T>::MiniPhysNet(const ModelConfig& cfg) : Model<T>(cfg) {
  int h = cfg.height;
  int w = cfg.width;
  for (int i = 0; i < 3; ++i) {
    const int k = i == 0 ? 5 : 3;
    conv_[i] = ConvShape{kTrunkChannels[i], kTrunkChannels[i + 1], k, 2, k / 2, h, w};
    conv_idx_[i] = this->specs_.size();
    const std::string name = "trunk.conv" + std::to_string(i + 1);
    this->add_param(name + ".weight", {conv_[i].out_c, conv_[i].in_c, k, k},
                    conv_[i].in_c * k * k);
    this->add_param(name + ".bias", {conv_[i].out_c}, 0);
    h = conv_[i].out_h();
    w = conv_[i].out_w();
  }
  fall_idx_ = this->specs_.size();
  this->add_param("fall.weight", {1, kTrunkChannels[3]}, kTrunkChannels[3]);
  this->add_param("fall.bias", {1}, 0);

  int in_c = kTrunkChannels[3];
  for (int i = 0; i < 3; ++i) {
    up_[i] = ConvShape{in_c, kHeadChannels[i], 3, 1, 1, h, w};
    in_c = kHeadChannels[i];
    h *= 2;
    w *= 2;
  }

  static constexpr const char* kStepNames[kMaskSteps] = {"t0", "t1", "t2", "t4"};
  auto add_stage = [&](const std::string& prefix, int stage) {
    const std::size_t idx = this->specs_.size();
    const ConvShape& s = up_[stage];
    this->add_param(prefix + ".weight", {s.out_c, s.in_c, 3, 3}, s.in_c * 9);
    this->add_param(prefix + ".bias", {s.out_c}, 0);
    return idx;
  };
  if (cfg.shared_heads) {
    Branch b;
    b.up1 = add_stage("mask.up1", 0);
    b.up2 = add_stage("mask.up2", 1);
    for (int t = 0; t < kMaskSteps; ++t) {
      out_idx_[t] = add_stage(std::string("mask_") + kStepNames[t] + ".out", 2);
      b.steps.push_back(t);
    }
    branches_.push_back(b);
  } else {
    for (int t = 0; t < kMaskSteps; ++t) {
      const std::string prefix = std::string("mask_") + kStepNames[t];
      Branch b;
      b.up1 = add_stage(prefix + ".up1", 0);
      b.up2 = add_stage(prefix + ".up2", 1);
      out_idx_[t] = add_stage(prefix + ".out", 2);
      b.steps.push_back(t);
      branches_.push_back(b);
    }
  }
  this->finalize_params();
}

template <typename T>
typename MiniPhysNet<T>::Work MiniPhysNet<T>::make_work() const {
  Work w;
  auto in_size = [](const ConvShape& s) { return static_cast<std::size_t>(s.in_c) * s.in_h * s.in_w; };
  auto out_size = [](const ConvShape& s) { return static_cast<std::size_t>(s.out_c) * s.out_pixels(); };
  auto up_out = [](const ConvShape& s) { return static_cast<std::size_t>(s.out_c) * 4 * s.in_h * s.in_w; };
  w.x.resize(in_size(conv_[0]));
  w.a1.resize(out_size(conv_[0]));
  w.a2.resize(out_size(conv_[1]));
  w.a3.resize(out_size(conv_[2]));
  w.pooled.resize(kTrunkChannels[3]);
  w.h1.resize(up_out(up_[0]));
  w.h2.resize(up_out(up_[1]));
  w.logits.resize(up_out(up_[2]));
  w.probs.resize(w.logits.size());
  w.da1.resize(w.a1.size());
  w.da2.resize(w.a2.size());
  w.da3.resize(w.a3.size());
  w.tmp3.resize(w.a3.size());
  w.dh1.resize(w.h1.size());
  w.dh2.resize(w.h2.size());
  w.dtmp2.resize(w.h2.size());
  w.dlogits.resize(w.logits.size());
  return w;
}

template <typename T>
void MiniPhysNet<T>::trunk(const T* image, Work& w) const {
  for (std::size_t i = 0; i < w.x.size(); ++i) w.x[i] = image[i] - T(0.5);
  const T* in = w.x.data();
  T* outs[3] = {w.a1.data(), w.a2.data(), w.a3.data()};
  for (int i = 0; i < 3; ++i) {
    const T* wt = this->param(conv_idx_[i]);
    const T* b = this->param(conv_idx_[i] + 1);
    conv2d_forward(conv_[i], in, wt, b, outs[i], w.scratch);
    relu_forward(outs[i], static_cast<std::size_t>(conv_[i].out_c) * conv_[i].out_pixels());
    in = outs[i];
  }
  global_avg_pool_forward(w.a3.data(), kTrunkChannels[3], static_cast<int>(conv_[2].out_pixels()),
                          w.pooled.data());
}

template <typename T>
T MiniPhysNet<T>::fall_logit(Work& w) const {
  T z = 0;
  linear_forward(w.pooled.data(), kTrunkChannels[3], this->param(fall_idx_),
                 this->param(fall_idx_ + 1), 1, &z);
  return z;
}

template <typename T>
void MiniPhysNet<T>::branch_forward(const Branch& b, Work& w) const {
  upconv3x3_forward(up_[0], w.a3.data(), this->param(b.up1), this->param(b.up1 + 1), w.h1.data(),
                    w.scratch);
  relu_forward(w.h1.data(), w.h1.size());
  upconv3x3_forward(up_[1], w.h1.data(), this->param(b.up2), this->param(b.up2 + 1), w.h2.data(),
                    w.scratch);
  relu_forward(w.h2.data(), w.h2.size());
}

template <typename T>
void MiniPhysNet<T>::forward(const T* images, std::size_t n, T* fall_probs, T* mask_probs,
                             int jobs) const {
  const std::size_t isz = this->image_size();
  const std::size_t msz = this->mask_output_size();
  const int pixels = static_cast<int>(this->pixels());
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks, jobs, [&](std::size_t c) {
    Work w = make_work();
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      trunk(images + i * isz, w);
      fall_probs[i] = sigmoid(fall_logit(w));
      if (mask_probs == nullptr) continue;
      for (const Branch& b : branches_) {
        branch_forward(b, w);
        for (int t : b.steps) {
          upconv3x3_forward(up_[2], w.h2.data(), this->param(out_idx_[t]),
                            this->param(out_idx_[t] + 1), w.logits.data(), w.scratch);
          T* dst = mask_probs + i * msz + static_cast<std::size_t>(t) * kClasses * pixels;
          softmax_cross_entropy<T>(w.logits.data(), kClasses, pixels, nullptr, dst, nullptr, T(0));
        }
      }
    }
  });
}

template <typename T>
void MiniPhysNet<T>::features(const T* image, T* out) const {
  Work w = make_work();
  trunk(image, w);
  std::copy(w.pooled.begin(), w.pooled.end(), out);
}

template <typename T>
double MiniPhysNet<T>::sample(const T* image, const SampleLabel& label, const LossConfig& lc, T* grad,
                              Work& w) const {
  trunk(image, w);
  T dz = 0;
  const T z = fall_logit(w);
  double total = static_cast<double>(bce_with_logit(z, label.fell, &dz));
  const bool with_masks = lc.lambda_mask > 0.0 && label.has_masks();
  const int pixels = static_cast<int>(this->pixels());
  const T lambda = static_cast<T>(lc.lambda_mask);

  if (grad == nullptr) {
    if (!with_masks) return total;
    for (const Branch& b : branches_) {
      branch_forward(b, w);
      for (int t : b.steps) {
        upconv3x3_forward(up_[2], w.h2.data(), this->param(out_idx_[t]),
                          this->param(out_idx_[t] + 1), w.logits.data(), w.scratch);
        total += lc.lambda_mask * static_cast<double>(softmax_cross_entropy<T>(
                                      w.logits.data(), kClasses, pixels, label.masks[t],
                                      w.probs.data(), nullptr, T(0)));
      }
    }
    return total;
  }

  auto g = [&](std::size_t index) { return grad + grad_offset(index); };
  std::fill(w.da3.begin(), w.da3.end(), T(0));
  if (with_masks) {
    for (const Branch& b : branches_) {
      branch_forward(b, w);
      std::fill(w.dh2.begin(), w.dh2.end(), T(0));
      for (int t : b.steps) {
        const std::size_t o = out_idx_[t];
        upconv3x3_forward(up_[2], w.h2.data(), this->param(o), this->param(o + 1), w.logits.data(),
                          w.scratch);
        total += lc.lambda_mask * static_cast<double>(softmax_cross_entropy<T>(
                                      w.logits.data(), kClasses, pixels, label.masks[t],
                                      w.probs.data(), w.dlogits.data(), lambda));
        upconv3x3_backward(up_[2], w.h2.data(), this->param(o), w.dlogits.data(), g(o), g(o + 1),
                           w.dtmp2.data(), w.scratch);
        add_into(w.dh2.data(), w.dtmp2.data(), w.dh2.size());
      }
      relu_backward(w.h2.data(), w.dh2.data(), w.dh2.size());
      upconv3x3_backward(up_[1], w.h1.data(), this->param(b.up2), w.dh2.data(), g(b.up2),
                         g(b.up2 + 1), w.dh1.data(), w.scratch);
      relu_backward(w.h1.data(), w.dh1.data(), w.dh1.size());
      upconv3x3_backward(up_[0], w.a3.data(), this->param(b.up1), w.dh1.data(), g(b.up1),
                         g(b.up1 + 1), w.tmp3.data(), w.scratch);
      add_into(w.da3.data(), w.tmp3.data(), w.da3.size());
    }
  }

  T dpooled[kTrunkChannels[3]];
  linear_backward(w.pooled.data(), kTrunkChannels[3], this->param(fall_idx_), &dz, 1, g(fall_idx_),
                  g(fall_idx_ + 1), dpooled);
  global_avg_pool_backward(dpooled, kTrunkChannels[3], static_cast<int>(conv_[2].out_pixels()),
                           w.tmp3.data());
  add_into(w.da3.data(), w.tmp3.data(), w.da3.size());

  relu_backward(w.a3.data(), w.da3.data(), w.da3.size());
  conv2d_backward(conv_[2], w.a2.data(), this->param(conv_idx_[2]), w.da3.data(), g(conv_idx_[2]),
                  g(conv_idx_[2] + 1), w.da2.data(), w.scratch);
  relu_backward(w.a2.data(), w.da2.data(), w.da2.size());
  conv2d_backward(conv_[1], w.a1.data(), this->param(conv_idx_[1]), w.da2.data(), g(conv_idx_[1]),
                  g(conv_idx_[1] + 1), w.da1.data(), w.scratch);
  relu_backward(w.a1.data(), w.da1.data(), w.da1.size());
  conv2d_backward(conv_[0], w.x.data(), this->param(conv_idx_[0]), w.da1.data(), g(conv_idx_[0]),
                  g(conv_idx_[0] + 1), static_cast<T*>(nullptr), w.scratch);
  return total;
}

template <typename T>
double MiniPhysNet<T>::loss(const T* images, std::span<const SampleLabel> labels,
                            const LossConfig& lc, T* grad, int jobs) const {
  lc.validate();
  const std::size_t n = labels.size();
  if (n == 0) throw Error(ErrorCode::kShapeMismatch, "empty batch");
  const std::size_t isz = this->image_size();
  const std::size_t shards = std::min<std::size_t>(kShards, n);
  const std::size_t np = this->param_count();
  std::vector<std::vector<T>> grads(grad != nullptr ? shards : 0);
  std::vector<double> losses(shards, 0.0);
  parallel_for(shards, jobs, [&](std::size_t s) {
    Work w = make_work();
    T* gs = nullptr;
    if (grad != nullptr) {
      grads[s].assign(np, T(0));
      gs = grads[s].data();
    }
    for (std::size_t i = n * s / shards; i < n * (s + 1) / shards; ++i)
      losses[s] += sample(images + i * isz, labels[i], lc, gs, w);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  if (grad != nullptr) {
    const T inv = T(1) / static_cast<T>(n);
    std::copy(grads[0].begin(), grads[0].end(), grad);
    for (std::size_t s = 1; s < shards; ++s) add_into(grad, grads[s].data(), np);
    for (std::size_t p = 0; p < np; ++p) grad[p] *= inv;
  }
  return total / static_cast<double>(n);
}

}  // namespace

template <typename T>
std::unique_ptr<Model<T>> make_mini_physnet(const ModelConfig& cfg) {
  return std::make_unique<MiniPhysNet<T>>(cfg);
}

template std::unique_ptr<Model<float>> make_mini_physnet<float>(const ModelConfig&);
template std::unique_ptr<Model<double>> make_mini_physnet<double>(const ModelConfig&);

}  // namespace blocktower::learn
