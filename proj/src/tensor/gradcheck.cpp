#include "mrinet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrinet/errors.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

namespace {
double evaluate(const ScalarFunction &f, const Tensor<double> &x) {
  Tape<double> tape;
  Var in = tape.constant(x);
  Var out = f(tape, in);
  const auto &v = tape.value(out);
  if (v.size() != 1)
    throw DimensionError("output", "finite_difference_check needs a scalar function");
  return v[0];
}
} // namespace

FiniteDifferenceReport finite_difference_check(const ScalarFunction &f,
                                               const Tensor<double> &point,
                                               double tolerance, std::size_t probes,
                                               std::uint64_t seed) {
  FiniteDifferenceReport report;
  report.tolerance = tolerance;

  Tape<double> tape;
  Var in = tape.variable(point);
  Var out = f(tape, in);
  auto grads = tape.backward(out);
  const Tensor<double> analytic =
      grads.has(in) ? grads.of(in) : Tensor<double>(point.shape(), 0.0);

  std::vector<std::size_t> idx(point.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (probes != 0 && probes < idx.size()) {
    Rng rng = Rng::keyed({seed, 0x9dcULL});
    shuffle(idx.begin(), idx.end(), rng);
    idx.resize(probes);
    std::sort(idx.begin(), idx.end());
  }

  Tensor<double> x = point;
  for (std::size_t i : idx) {
    const double x0 = point[i];
    const double h = 1e-6 * std::max(1.0, std::abs(x0));
    x[i] = x0 + h;
    const double fp = evaluate(f, x);
    x[i] = x0 - h;
    const double fm = evaluate(f, x);
    x[i] = x0;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      report.nan_detected = true;
      continue;
    }
    const double err =
        std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_index = i;
    }
    ++report.probes;
  }
  report.passed = !report.nan_detected && report.max_relative_error < tolerance;
  return report;
}

} // namespace mrinet
