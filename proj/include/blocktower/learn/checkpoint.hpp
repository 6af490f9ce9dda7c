#pragma once

#include <memory>
#include <string>

#include "blocktower/learn/model.hpp"

namespace blocktower::learn {

inline constexpr uint32_t kCheckpointVersion = 1;

// Layout (all integers little-endian u32):
//   "MPHN" version kind height width flags factor_dim n_tensors
//   per tensor: name_len name ndim dims...
//   weights as little-endian f32 in table order.
// flags bit 0: shared mask heads.
std::string encode_checkpoint(const Model<float>& model);

// Throws Error(kCorruptFile) naming `source` for a bad magic, version, table
// or byte count, and Error(kShapeMismatch) if the table disagrees with the
// architecture named in the header.
std::unique_ptr<Model<float>> decode_checkpoint(std::string_view bytes, const std::string& source);

void save_checkpoint(const std::string& path, const Model<float>& model);
std::unique_ptr<Model<float>> load_checkpoint(const std::string& path);

}  // namespace blocktower::learn
