#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace blocktower::learn {

inline constexpr int kDefaultK = 10;

// Row-major feature matrices: `train` is (n_train, dim), `query` is
// (n_query, dim). Returns, per query, the fraction of its k nearest (L2)
// training points labelled fell (nonzero); equal distances prefer the lower training
// index. Throws Error(kEmptyTrainSet) for an empty training set and
// Error(kInvalidArgument) for k outside [1, n_train].
std::vector<double> knn_predict(std::span<const float> train, std::span<const uint8_t> train_fell,
                                std::span<const float> query, std::size_t dim, int k = kDefaultK,
                                int jobs = 1);

}  // namespace blocktower::learn
