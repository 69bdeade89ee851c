#pragma once

#include <cstdint>
#include <functional>

#include "mrinet/tape.hpp"

namespace mrinet {

struct FiniteDifferenceReport {
  double tolerance = 0.0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
  bool nan_detected = false;
  bool passed = false;
};

// Builds a scalar from the recorded input on the given tape.
using ScalarFunction = std::function<Var(Tape<double> &, Var)>;

// Compares the reverse-mode gradient of f at `point` against central
// differences with step h = 1e-6 * max(1, |x_i|). The error per element is
// |analytic - numeric| / max(1, |analytic|, |numeric|). With probes == 0
// every element is checked; otherwise `probes` distinct elements are drawn
// with the given seed.
FiniteDifferenceReport finite_difference_check(const ScalarFunction &f,
                                               const Tensor<double> &point,
                                               double tolerance,
                                               std::size_t probes = 0,
                                               std::uint64_t seed = 0);

} // namespace mrinet
