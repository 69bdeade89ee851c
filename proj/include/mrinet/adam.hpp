#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mrinet/graph.hpp"
#include "mrinet/tensor.hpp"

namespace mrinet {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moments per parameter name, zero until first touched.
template <typename T> struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
};

// One bias-corrected Adam update of every parameter named in `grads`:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
// The corrections 1 - b^t are computed in double and then rounded to T;
// everything else runs in T. A non-finite gradient raises NumericError
// before any parameter changes.
template <typename T>
void adam_step(ParameterSet<T> &params, const std::map<std::string, Tensor<T>> &grads,
               AdamState<T> &state, const AdamConfig &config);

} // namespace mrinet
