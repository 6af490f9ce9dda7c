#include <cmath>

#include "blocktower/common/error.hpp"
#include "blocktower/common/rng.hpp"
#include "blocktower/learn/model.hpp"
#include "nets.hpp"

namespace blocktower::learn {

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kMini: return "mini";
    case ModelKind::kLogReg: return "logreg";
    case ModelKind::kLogRegFactored: return "logreg-factored";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "mini") return ModelKind::kMini;
  if (name == "logreg") return ModelKind::kLogReg;
  if (name == "logreg-factored") return ModelKind::kLogRegFactored;
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 8 != 0 || width % 8 != 0)
    throw Error(ErrorCode::kShapeMismatch, "input size " + std::to_string(width) + "x" +
                                               std::to_string(height) + " is not a multiple of 8");
  if (factor_dim < 1) throw Error(ErrorCode::kInvalidConfig, "factor_dim must be >= 1");
}

std::size_t ParamSpec::size() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void LossConfig::validate() const {
  if (!(lambda_mask >= 0.0) || !std::isfinite(lambda_mask))
    throw Error(ErrorCode::kInvalidConfig, "lambda_mask must be finite and >= 0");
}

template <typename T>
const ParamSpec& Model<T>::spec(std::string_view name) const {
  for (const auto& s : specs_)
    if (s.name == name) return s;
  throw Error(ErrorCode::kInvalidArgument, "no parameter named '" + std::string(name) + "'");
}

template <typename T>
void Model<T>::init(uint64_t seed) {
  Pcg32 rng(seed);
  for (const auto& s : specs_) {
    T* p = params_.data() + s.offset;
    const std::size_t n = s.size();
    if (s.fan_in == 0) {
      std::fill(p, p + n, T(0));
      continue;
    }
    const double std = std::sqrt(2.0 / s.fan_in);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<T>(std * rng.normal());
  }
}

template <typename T>
void Model<T>::add_param(std::string name, std::vector<int> shape, int fan_in) {
  ParamSpec s;
  s.name = std::move(name);
  s.shape = std::move(shape);
  s.fan_in = fan_in;
  s.offset = specs_.empty() ? 0 : specs_.back().offset + specs_.back().size();
  specs_.push_back(std::move(s));
}

template <typename T>
void Model<T>::finalize_params() {
  params_.assign(specs_.empty() ? 0 : specs_.back().offset + specs_.back().size(), T(0));
}

template <typename T>
void Model<T>::check_batch(std::size_t images, std::size_t labels) const {
  if (images != labels)
    throw Error(ErrorCode::kShapeMismatch, "batch has " + std::to_string(images) + " images but " +
                                               std::to_string(labels) + " labels");
}

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.kind == ModelKind::kMini) return make_mini_physnet<T>(cfg);
  return make_logreg<T>(cfg);
}

template <typename To, typename From>
std::unique_ptr<Model<To>> convert_model(const Model<From>& src) {
  auto dst = make_model<To>(src.config());
  const auto& p = src.params();
  for (std::size_t i = 0; i < p.size(); ++i) dst->params()[i] = static_cast<To>(p[i]);
  return dst;
}

template class Model<float>;
template class Model<double>;
template std::unique_ptr<Model<float>> make_model<float>(const ModelConfig&);
template std::unique_ptr<Model<double>> make_model<double>(const ModelConfig&);
template std::unique_ptr<Model<double>> convert_model<double, float>(const Model<float>&);
template std::unique_ptr<Model<float>> convert_model<float, double>(const Model<double>&);
template std::unique_ptr<Model<float>> convert_model<float, float>(const Model<float>&);

}  // namespace blocktower::learn
