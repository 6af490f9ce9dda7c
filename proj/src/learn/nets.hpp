#pragma once

#include <memory>

#include "blocktower/learn/model.hpp"

namespace blocktower::learn {

inline constexpr int kShards = 8;

template <typename T>
std::unique_ptr<Model<T>> make_mini_physnet(const ModelConfig& cfg);

template <typename T>
std::unique_ptr<Model<T>> make_logreg(const ModelConfig& cfg);

}  // namespace blocktower::learn
