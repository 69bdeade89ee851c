#include "mrinet/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "mrinet/errors.hpp"

namespace mrinet {

namespace {
std::uint64_t next_tape_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter++;
}
} // namespace

template <typename T> const Tensor<T> &Gradients<T>::of(Var v) const {
  if (v.tape != tape_)
    throw LookupError("variable belongs to a different tape");
  if (v.index >= grads_.size() || !grads_[v.index])
    throw LookupError("no gradient recorded for tape entry " + std::to_string(v.index));
  return *grads_[v.index];
}

template <typename T> bool Gradients<T>::has(Var v) const noexcept {
  return v.tape == tape_ && v.index < grads_.size() && grads_[v.index].has_value();
}

template <typename T> Tape<T>::Tape() : id_(next_tape_id()) {}

template <typename T> std::size_t Tape<T>::check(Var v) const {
  if (v.tape != id_ || v.index >= nodes_.size())
    throw LookupError("variable is not recorded on this tape");
  return v.index;
}

template <typename T> const Tensor<T> &Tape<T>::value(Var v) const {
  const Node &n = nodes_[check(v)];
  return n.external ? *n.external : n.owned;
}

template <typename T> bool Tape<T>::requires_grad(Var v) const {
  return nodes_[check(v)].requires_grad;
}

template <typename T> Var Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back({"constant", std::move(value), nullptr, {}, false, nullptr});
  return {id_, nodes_.size() - 1};
}

template <typename T> Var Tape<T>::variable(Tensor<T> value) {
  nodes_.push_back({"variable", std::move(value), nullptr, {}, true, nullptr});
  return {id_, nodes_.size() - 1};
}

template <typename T> Var Tape<T>::watch(const Tensor<T> &external, bool requires_grad) {
  nodes_.push_back({"watch", Tensor<T>{}, &external, {}, requires_grad, nullptr});
  return {id_, nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(std::string op, Tensor<T> value, std::vector<std::size_t> inputs,
                    Rule rule) {
  bool rg = std::any_of(inputs.begin(), inputs.end(),
                        [&](std::size_t i) { return nodes_[i].requires_grad; });
  nodes_.push_back({std::move(op), std::move(value), nullptr, std::move(inputs), rg,
                    rg ? std::move(rule) : Rule{}});
  return {id_, nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::custom(std::string op, Tensor<T> value, const std::vector<Var> &inputs,
                    Rule rule) {
  std::vector<std::size_t> in;
  for (Var v : inputs)
    in.push_back(check(v));
  return record(std::move(op), std::move(value), std::move(in), std::move(rule));
}

template <typename T>
Var Tape<T>::conv2d(Var x, Var weights, std::optional<Var> bias, const ConvSpec &spec) {
  const std::size_t xi = check(x), wi = check(weights);
  std::vector<std::size_t> in{xi, wi};
  if (bias)
    in.push_back(check(*bias));
  const std::size_t bi = bias ? in.back() : 0;
  auto out = mrinet::conv2d(value(x), value(weights), bias ? &value(*bias) : nullptr, spec);
  return record("conv2d", std::move(out), std::move(in),
                [spec, xi, wi, bi, has_bias = bias.has_value()](
                    const Tape &t, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  GradRequest req{t.needs(xi), t.needs(wi), has_bias && t.needs(bi)};
                  auto r = mrinet::conv2d_backward(t.value({t.id_, xi}), t.value({t.id_, wi}),
                                                   g, spec, req);
                  grads[0] = std::move(r.input);
                  grads[1] = std::move(r.weights);
                  if (has_bias)
                    grads[2] = std::move(r.bias);
                });
}

template <typename T>
Var Tape<T>::depthwise_conv2d(Var x, Var weights, std::optional<Var> bias,
                              const ConvSpec &spec) {
  const std::size_t xi = check(x), wi = check(weights);
  std::vector<std::size_t> in{xi, wi};
  if (bias)
    in.push_back(check(*bias));
  const std::size_t bi = bias ? in.back() : 0;
  auto out = mrinet::depthwise_conv2d(value(x), value(weights),
                                      bias ? &value(*bias) : nullptr, spec);
  return record("depthwise_conv2d", std::move(out), std::move(in),
                [spec, xi, wi, bi, has_bias = bias.has_value()](
                    const Tape &t, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  GradRequest req{t.needs(xi), t.needs(wi), has_bias && t.needs(bi)};
                  auto r = mrinet::depthwise_conv2d_backward(
                      t.value({t.id_, xi}), t.value({t.id_, wi}), g, spec, req);
                  grads[0] = std::move(r.input);
                  grads[1] = std::move(r.weights);
                  if (has_bias)
                    grads[2] = std::move(r.bias);
                });
}

template <typename T> Var Tape<T>::max_pool2d(Var x, const PoolSpec &spec) {
  const std::size_t xi = check(x);
  std::vector<std::size_t> argmax;
  auto out = mrinet::max_pool2d(value(x), spec, &argmax);
  Shape in_shape = value(x).shape();
  return record("max_pool2d", std::move(out), {xi},
                [argmax = std::move(argmax), in_shape](const Tape &, const Tensor<T> &g,
                                                       std::vector<Tensor<T>> &grads) {
                  grads[0] = mrinet::max_pool2d_backward(in_shape, argmax, g);
                });
}

template <typename T> Var Tape<T>::global_average_pool(Var x) {
  const std::size_t xi = check(x);
  Shape in_shape = value(x).shape();
  return record("global_average_pool", mrinet::global_average_pool(value(x)), {xi},
                [in_shape](const Tape &, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  grads[0] = mrinet::global_average_pool_backward(in_shape, g);
                });
}

template <typename T> Var Tape<T>::dense(Var x, Var weights, Var bias) {
  const std::size_t xi = check(x), wi = check(weights), bi = check(bias);
  auto out = mrinet::dense_affine(value(x), value(weights), value(bias));
  return record("dense", std::move(out), {xi, wi, bi},
                [xi, wi, bi](const Tape &t, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  GradRequest req{t.needs(xi), t.needs(wi), t.needs(bi)};
                  auto r = mrinet::dense_affine_backward(t.value({t.id_, xi}),
                                                         t.value({t.id_, wi}), g, req);
                  grads[0] = std::move(r.input);
                  grads[1] = std::move(r.weights);
                  grads[2] = std::move(r.bias);
                });
}

template <typename T>
Var Tape<T>::batch_norm(Var x, Var gamma, Var beta, Tensor<T> &running_mean,
                        Tensor<T> &running_var, Mode mode,
                        const BatchNormOptions &options) {
  const std::size_t xi = check(x), gi = check(gamma), bi = check(beta);
  BatchNormSaved<T> saved;
  auto out = mrinet::batch_norm(value(x), value(gamma), value(beta), running_mean,
                                running_var, mode, options, &saved);
  return record("batch_norm", std::move(out), {xi, gi, bi},
                [saved = std::move(saved), xi, gi, bi](const Tape &t, const Tensor<T> &g,
                                                       std::vector<Tensor<T>> &grads) {
                  GradRequest req{t.needs(xi), t.needs(gi), t.needs(bi)};
                  auto r = mrinet::batch_norm_backward(g, t.value({t.id_, gi}), saved, req);
                  grads[0] = std::move(r.input);
                  grads[1] = std::move(r.gamma);
                  grads[2] = std::move(r.beta);
                });
}

template <typename T> Var Tape<T>::activation(Var x, ActivationKind kind) {
  const std::size_t xi = check(x);
  return record(to_string(kind), mrinet::activation(value(x), kind), {xi},
                [xi, kind](const Tape &t, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  grads[0] = mrinet::activation_backward(t.value({t.id_, xi}), g, kind);
                });
}

template <typename T> Var Tape<T>::add(Var a, Var b) {
  const std::size_t ai = check(a), bi = check(b);
  return record("add", mrinet::add(value(a), value(b)), {ai, bi},
                [](const Tape &, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  grads[0] = g;
                  grads[1] = g;
                });
}

template <typename T> Var Tape<T>::softmax(Var logits) {
  const std::size_t li = check(logits);
  Var out = record("softmax", mrinet::softmax(value(logits)), {li}, nullptr);
  // The rule needs the output probabilities, which live on the new node.
  const std::size_t oi = out.index;
  if (nodes_[oi].requires_grad)
    nodes_[oi].rule = [oi](const Tape &t, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
      grads[0] = mrinet::softmax_backward(t.nodes_[oi].owned, g);
    };
  return out;
}

template <typename T> Var Tape<T>::dropout(Var x, double rate, Mode mode, Rng &rng) {
  const std::size_t xi = check(x);
  std::vector<T> mask;
  auto out = mrinet::dropout(value(x), rate, mode, rng, &mask);
  return record("dropout", std::move(out), {xi},
                [mask = std::move(mask)](const Tape &, const Tensor<T> &g,
                                         std::vector<Tensor<T>> &grads) {
                  Tensor<T> dx = g;
                  for (std::size_t i = 0; i < dx.size(); ++i)
                    dx[i] *= mask[i];
                  grads[0] = std::move(dx);
                });
}

template <typename T> Var Tape<T>::sum(Var x) {
  const std::size_t xi = check(x);
  T s{0};
  for (T v : value(x).data())
    s += v;
  Shape shape = value(x).shape();
  return record("sum", Tensor<T>({1}, {s}), {xi},
                [shape](const Tape &, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  grads[0] = Tensor<T>(shape, g[0]);
                });
}

template <typename T> Var Tape<T>::weighted_sum(Var x, const Tensor<T> &weights) {
  const std::size_t xi = check(x);
  if (weights.shape() != value(x).shape())
    throw DimensionError("weights", "weighted_sum weights must match " +
                                        to_string(value(x).shape()));
  T s{0};
  for (std::size_t i = 0; i < weights.size(); ++i)
    s += value(x)[i] * weights[i];
  return record("weighted_sum", Tensor<T>({1}, {s}), {xi},
                [weights](const Tape &, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  Tensor<T> dx = weights;
                  for (auto &v : dx.data())
                    v *= g[0];
                  grads[0] = std::move(dx);
                });
}

template <typename T>
Var Tape<T>::softmax_cross_entropy(Var logits, std::span<const int> labels, double floor) {
  const std::size_t li = check(logits);
  const Tensor<T> &z = value(logits);
  require_rank(z, 2, "logits");
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n)
    throw DimensionError("batch", std::to_string(labels.size()) + " labels for " +
                                      std::to_string(n) + " rows");
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k)
      throw LabelError("label " + std::to_string(labels[i]) + " at index " +
                       std::to_string(i) + " is outside 0.." + std::to_string(k - 1));
  Tensor<T> probs = mrinet::softmax(z);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    loss -= std::log(std::max(static_cast<double>(probs[i * k + labels[i]]), floor));
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  return record("softmax_cross_entropy", Tensor<T>({1}, {static_cast<T>(loss)}), {li},
                [probs = std::move(probs), lab = std::move(lab), n, k](
                    const Tape &, const Tensor<T> &g, std::vector<Tensor<T>> &grads) {
                  Tensor<T> dz = probs;
                  for (std::size_t i = 0; i < n; ++i)
                    dz[i * k + lab[i]] -= T{1};
                  const T scale = g[0] / static_cast<T>(n);
                  for (auto &v : dz.data())
                    v *= scale;
                  grads[0] = std::move(dz);
                });
}

template <typename T>
Gradients<T> Tape<T>::backward(Var output, const Tensor<T> &seed) const {
  const std::size_t oi = check(output);
  if (seed.shape() != value(output).shape())
    throw DimensionError("seed", "seed shape " + to_string(seed.shape()) +
                                     " does not match output " +
                                     to_string(value(output).shape()));
  Gradients<T> result;
  result.tape_ = id_;
  result.grads_.resize(nodes_.size());
  if (!nodes_[oi].requires_grad)
    return result;
  result.grads_[oi] = seed;
  std::vector<Tensor<T>> local;
  for (std::size_t i = oi + 1; i-- > 0;) {
    const Node &node = nodes_[i];
    if (!node.rule || !result.grads_[i])
      continue;
    local.assign(node.inputs.size(), Tensor<T>{});
    node.rule(*this, *result.grads_[i], local);
    result.visited_.push_back(i);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t src = node.inputs[j];
      if (!nodes_[src].requires_grad || local[j].empty())
        continue;
      auto &acc = result.grads_[src];
      if (!acc) {
        acc = std::move(local[j]);
      } else {
        for (std::size_t e = 0; e < acc->size(); ++e)
          (*acc)[e] += local[j][e];
      }
    }
    // Intermediate gradients are no longer needed once propagated.
    if (!node.inputs.empty() && i != oi)
      result.grads_[i].reset();
  }
  return result;
}

template <typename T> Gradients<T> Tape<T>::backward(Var scalar_output) const {
  const auto &v = value(scalar_output);
  if (v.size() != 1)
    throw DimensionError("output", "backward() without a seed needs a scalar output");
  return backward(scalar_output, Tensor<T>(v.shape(), T{1}));
}

template class Tape<float>;
template class Tape<double>;
template class Gradients<float>;
template class Gradients<double>;

} // namespace mrinet
