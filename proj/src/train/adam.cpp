#include "mrinet/adam.hpp"

#include <cmath>

#include "mrinet/errors.hpp"

namespace mrinet {

template <typename T>
void adam_step(ParameterSet<T> &params, const std::map<std::string, Tensor<T>> &grads,
               AdamState<T> &state, const AdamConfig &config) {
  for (const auto &[name, g] : grads) {
    if (!params.contains(name))
      throw LookupError("adam: no parameter named " + name);
    if (params.kind(name) != SlotKind::trainable)
      throw LookupError("adam: " + name + " is not trainable");
    if (g.shape() != params.at(name).shape())
      throw DimensionError("shape", "adam: gradient of " + name + " has the wrong shape");
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw NumericError("non-finite gradient in " + name + " at element " + std::to_string(i));
  }

  ++state.step;
  const auto t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T one_b1 = static_cast<T>(1.0 - config.beta1), one_b2 = static_cast<T>(1.0 - config.beta2);
  const T lr = static_cast<T>(config.learning_rate), eps = static_cast<T>(config.epsilon);
  const T c1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(config.beta2, t));

  for (const auto &[name, g] : grads) {
    Tensor<T> &theta = params.at(name);
    auto &m = state.m[name];
    auto &v = state.v[name];
    if (m.shape() != theta.shape())
      m = Tensor<T>(theta.shape());
    if (v.shape() != theta.shape())
      v = Tensor<T>(theta.shape());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + one_b1 * g[i];
      v[i] = b2 * v[i] + one_b2 * (g[i] * g[i]);
      const T m_hat = m[i] / c1;
      const T v_hat = v[i] / c2;
      theta[i] = theta[i] - lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template void adam_step<float>(ParameterSet<float> &, const std::map<std::string, Tensor<float>> &,
                               AdamState<float> &, const AdamConfig &);
template void adam_step<double>(ParameterSet<double> &,
                                const std::map<std::string, Tensor<double>> &, AdamState<double> &,
                                const AdamConfig &);

} // namespace mrinet
