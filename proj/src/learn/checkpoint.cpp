#include <bit>
#include <cstring>

#include "blocktower/common/error.hpp"
#include "blocktower/learn/checkpoint.hpp"
#include "blocktower/render.hpp"

namespace blocktower::learn {
namespace {

constexpr char kMagic[4] = {'M', 'P', 'H', 'N'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::kCorruptFile, source_ + ": " + msg);
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) fail(std::string("truncated while reading ") + what);
  }

  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Model<float>& model) {
  const ModelConfig& cfg = model.config();
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(cfg.kind));
  put_u32(out, static_cast<uint32_t>(cfg.height));
  put_u32(out, static_cast<uint32_t>(cfg.width));
  put_u32(out, cfg.shared_heads ? 1u : 0u);
  put_u32(out, static_cast<uint32_t>(cfg.factor_dim));
  put_u32(out, static_cast<uint32_t>(model.specs().size()));
  for (const ParamSpec& s : model.specs()) {
    put_u32(out, static_cast<uint32_t>(s.name.size()));
    out += s.name;
    put_u32(out, static_cast<uint32_t>(s.shape.size()));
    for (int d : s.shape) put_u32(out, static_cast<uint32_t>(d));
  }
  out.reserve(out.size() + 4 * model.param_count());
  for (float v : model.params()) put_u32(out, std::bit_cast<uint32_t>(v));
  return out;
}

std::unique_ptr<Model<float>> decode_checkpoint(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.take(4, "magic") != std::string_view(kMagic, 4)) r.fail("bad magic (expected MPHN)");
  const uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  ModelConfig cfg;
  const uint32_t kind = r.u32("model kind");
  if (kind > static_cast<uint32_t>(ModelKind::kLogRegFactored))
    r.fail("unknown model kind " + std::to_string(kind));
  cfg.kind = static_cast<ModelKind>(kind);
  cfg.height = static_cast<int>(r.u32("height"));
  cfg.width = static_cast<int>(r.u32("width"));
  const uint32_t flags = r.u32("flags");
  if (flags > 1) r.fail("unknown flags " + std::to_string(flags));
  cfg.shared_heads = (flags & 1u) != 0;
  cfg.factor_dim = static_cast<int>(r.u32("factor_dim"));
  cfg.max_params = ~std::size_t{0};
  if (cfg.height > 4096 || cfg.width > 4096 || cfg.factor_dim > 65536)
    r.fail("implausible dimensions in header");

  std::unique_ptr<Model<float>> model;
  try {
    model = make_model<float>(cfg);
  } catch (const Error& e) {
    r.fail(std::string("header describes an invalid model: ") + e.what());
  }
  const uint32_t n_tensors = r.u32("tensor count");
  const auto& specs = model->specs();
  if (n_tensors != specs.size())
    throw Error(ErrorCode::kShapeMismatch, source + ": " + std::to_string(n_tensors) +
                                               " tensors, architecture has " +
                                               std::to_string(specs.size()));
  for (const ParamSpec& s : specs) {
    const uint32_t len = r.u32("tensor name length");
    if (len > 256) r.fail("tensor name too long");
    const std::string_view name = r.take(len, "tensor name");
    const uint32_t ndim = r.u32("tensor rank");
    if (ndim > 8) r.fail("tensor rank too large");
    std::vector<int> shape;
    for (uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<int>(r.u32("tensor dims")));
    if (name != s.name || shape != s.shape)
      throw Error(ErrorCode::kShapeMismatch,
                  source + ": tensor '" + std::string(name) + "' does not match '" + s.name + "'");
  }
  if (r.remaining() != 4 * model->param_count())
    r.fail("weight section has " + std::to_string(r.remaining()) + " bytes, expected " +
           std::to_string(4 * model->param_count()));
  for (float& v : model->params()) v = std::bit_cast<float>(r.u32("weights"));
  return model;
}

void save_checkpoint(const std::string& path, const Model<float>& model) {
  render::write_file(path, encode_checkpoint(model));
}

std::unique_ptr<Model<float>> load_checkpoint(const std::string& path) {
  return decode_checkpoint(render::read_file(path), path);
}

}  // namespace blocktower::learn
