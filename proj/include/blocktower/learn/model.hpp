#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace blocktower::learn {

inline constexpr int kMaskSteps = 4;  // t = 0, 1, 2, 4 s
inline constexpr int kClasses = 5;    // background + four block colours

enum class ModelKind : uint32_t { kMini = 0, kLogReg = 1, kLogRegFactored = 2 };

std::string_view model_kind_name(ModelKind kind);
// Accepts "mini", "logreg", "logreg-factored"; Error(kInvalidArgument) otherwise.
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::kMini;
  int height = 56;
  int width = 56;
  // Mini only: the first two stages of the mask heads are shared across time
  // steps; each step keeps its own final classifier.
  bool shared_heads = false;
  // Factored logistic regression: width of the pixels -> mask bottleneck.
  int factor_dim = 128;
  // Unfactored logistic regression is refused above this many parameters.
  std::size_t max_params = std::size_t{1} << 28;

  // Throws Error(kShapeMismatch) for sizes not divisible by 8 and
  // Error(kInvalidConfig) for other bad values.
  void validate() const;
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  int fan_in = 0;  // 0 marks a bias (initialised to zero)

  std::size_t size() const;
};

struct LossConfig {
  double lambda_mask = 1.0;
  void validate() const;
};

// Targets for one example. Null mask pointers drop the mask term for that
// example (imported records carry no masks).
struct SampleLabel {
  bool fell = false;
  std::array<const uint8_t*, kMaskSteps> masks{};

  bool has_masks() const { return masks[0] != nullptr; }
};

// Parameters live in one flat vector described by `specs()`. Images are
// planar (3, H, W) with values in [0, 1]; models see them shifted by -0.5.
template <typename T>
class Model {
 public:
  virtual ~Model() = default;

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ParamSpec>& specs() const { return specs_; }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.size(); }
  const ParamSpec& spec(std::string_view name) const;

  std::size_t image_size() const { return 3 * pixels(); }
  std::size_t pixels() const { return static_cast<std::size_t>(cfg_.height) * cfg_.width; }
  // Per-example mask output: (kMaskSteps, kClasses, H, W) probabilities.
  std::size_t mask_output_size() const { return kMaskSteps * kClasses * pixels(); }

  // He-normal weights (std sqrt(2 / fan_in)) in spec order from one PCG32
  // stream; biases zero.
  void init(uint64_t seed);

  // Fall probabilities for `n` images. `mask_probs` may be null, in which case
  // the mask path is skipped.
  virtual void forward(const T* images, std::size_t n, T* fall_probs, T* mask_probs,
                       int jobs = 1) const = 0;

  // Mean over the batch of BCE(fall) + lambda * sum_t meanpixel CE(mask_t).
  // When `grad` is non-null it is overwritten with the gradient of that mean.
  virtual double loss(const T* images, std::span<const SampleLabel> labels, const LossConfig& lc,
                      T* grad, int jobs = 1) const = 0;

  // Representation used by kNN: pooled trunk activations for the mini net,
  // centred pixels for logistic regression.
  virtual std::size_t feature_dim() const = 0;
  virtual void features(const T* image, T* out) const = 0;

 protected:
  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {}
  void add_param(std::string name, std::vector<int> shape, int fan_in);
  void finalize_params();
  const T* param(std::size_t index) const { return params_.data() + specs_[index].offset; }
  void check_batch(std::size_t images, std::size_t labels) const;

  ModelConfig cfg_;
  std::vector<ParamSpec> specs_;
  std::vector<T> params_;
};

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& cfg);

// Copies parameters between precisions (same config required).
template <typename To, typename From>
std::unique_ptr<Model<To>> convert_model(const Model<From>& src);

}  // namespace blocktower::learn
