#include <cmath>

#include "mrinet/errors.hpp"
#include "mrinet/training.hpp"

namespace mrinet {

template <typename T>
double sparse_categorical_crossentropy(const Tensor<T> &probs, std::span<const int> labels,
                                       double floor) {
  if (probs.rank() != 2)
    throw DimensionError("rank", "probabilities must be [N, K]");
  const std::size_t N = probs.dim(0), K = probs.dim(1);
  if (labels.size() != N)
    throw DimensionError("batch", "got " + std::to_string(labels.size()) + " labels for " +
                                      std::to_string(N) + " rows");
  if (N == 0)
    throw DimensionError("batch", "empty batch");
  double total = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= K)
      throw LabelError("label " + std::to_string(y) + " at index " + std::to_string(i) +
                       " is outside 0.." + std::to_string(K - 1));
    total -= std::log(std::max(static_cast<double>(probs.at(i, std::size_t(y))), floor));
  }
  return total / static_cast<double>(N);
}

template <typename T> std::vector<int> argmax_rows(const Tensor<T> &scores) {
  if (scores.rank() != 2)
    throw DimensionError("rank", "argmax expects [N, K]");
  std::vector<int> out(scores.dim(0));
  for (std::size_t i = 0; i < scores.dim(0); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.dim(1); ++k)
      if (scores.at(i, k) > scores.at(i, best))
        best = k;
    out[i] = static_cast<int>(best);
  }
  return out;
}

template double sparse_categorical_crossentropy<float>(const Tensor<float> &,
                                                       std::span<const int>, double);
template double sparse_categorical_crossentropy<double>(const Tensor<double> &,
                                                        std::span<const int>, double);
template std::vector<int> argmax_rows<float>(const Tensor<float> &);
template std::vector<int> argmax_rows<double>(const Tensor<double> &);

} // namespace mrinet
