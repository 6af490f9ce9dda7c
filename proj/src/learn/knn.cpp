#include <algorithm>
#include <numeric>

#include "blocktower/common/error.hpp"
#include "blocktower/common/parallel.hpp"
#include "blocktower/learn/knn.hpp"

namespace blocktower::learn {

std::vector<double> knn_predict(std::span<const float> train, std::span<const uint8_t> train_fell,
                                std::span<const float> query, std::size_t dim, int k, int jobs) {
  const std::size_t n = train_fell.size();
  if (n == 0) throw Error(ErrorCode::kEmptyTrainSet, "kNN needs at least one training point");
  if (dim == 0 || train.size() != n * dim || query.size() % dim != 0)
    throw Error(ErrorCode::kShapeMismatch, "kNN feature matrices do not match the dimension");
  if (k < 1 || static_cast<std::size_t>(k) > n)
    throw Error(ErrorCode::kInvalidArgument, "k must lie in [1, " + std::to_string(n) + "]");
  const std::size_t m = query.size() / dim;
  std::vector<double> out(m);
  parallel_for(m, jobs, [&](std::size_t q) {
    const float* x = query.data() + q * dim;
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      const float* t = train.data() + i * dim;
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = static_cast<double>(x[j]) - static_cast<double>(t[j]);
        d += diff * diff;
      }
      dist[i] = d;
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](std::size_t a, std::size_t b) {
      return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    });
    int fell = 0;
    for (int i = 0; i < k; ++i) fell += train_fell[idx[i]] ? 1 : 0;
    out[q] = static_cast<double>(fell) / k;
  });
  return out;
}

}  // namespace blocktower::learn
