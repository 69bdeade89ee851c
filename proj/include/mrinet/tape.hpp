#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrinet/kernels.hpp"
#include "mrinet/tensor.hpp"

namespace mrinet {

// Handle to a value recorded on a Tape.
struct Var {
  std::uint64_t tape = 0;
  std::size_t index = 0;
};

template <typename T> class Tape;

// Result of a backward pass: one accumulated gradient per tape entry that
// requires one. Looking up anything else throws LookupError.
template <typename T> class Gradients {
public:
  const Tensor<T> &of(Var v) const;
  bool has(Var v) const noexcept;
  // Tape indices whose backward rule ran, in the order they ran. Gradients
  // of intermediate entries are released once propagated; leaves (weights,
  // inputs) and the output keep theirs.
  const std::vector<std::size_t> &visit_order() const noexcept { return visited_; }

private:
  friend class Tape<T>;
  std::uint64_t tape_ = 0;
  std::vector<std::optional<Tensor<T>>> grads_;
  std::vector<std::size_t> visited_;
};

// Records kernel applications in execution order so that backward() can
// replay them in reverse. Values are owned by the tape, except tensors
// registered through watch(), which are referenced and must outlive it.
template <typename T> class Tape {
public:
  Tape();
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var constant(Tensor<T> value);
  Var variable(Tensor<T> value);
  Var watch(const Tensor<T> &external, bool requires_grad = true);

  const Tensor<T> &value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string &op_name(std::size_t index) const { return nodes_.at(index).op; }

  Var conv2d(Var x, Var weights, std::optional<Var> bias, const ConvSpec &spec);
  Var depthwise_conv2d(Var x, Var weights, std::optional<Var> bias,
                       const ConvSpec &spec);
  Var max_pool2d(Var x, const PoolSpec &spec);
  Var global_average_pool(Var x);
  Var dense(Var x, Var weights, Var bias);
  Var batch_norm(Var x, Var gamma, Var beta, Tensor<T> &running_mean,
                 Tensor<T> &running_var, Mode mode,
                 const BatchNormOptions &options = {});
  Var activation(Var x, ActivationKind kind);
  Var relu(Var x) { return activation(x, ActivationKind::relu); }
  Var relu6(Var x) { return activation(x, ActivationKind::relu6); }
  Var add(Var a, Var b);
  Var softmax(Var logits);
  Var dropout(Var x, double rate, Mode mode, Rng &rng);

  // Scalar reductions, shape (1).
  Var sum(Var x);
  Var weighted_sum(Var x, const Tensor<T> &weights);
  // Mean sparse categorical cross-entropy of softmax(logits) against integer
  // labels, with the log argument floored at `floor`. The backward rule is
  // the fused (softmax - onehot) / N form.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels,
                            double floor = 1e-12);

  // Backward rule: given dL/d(output), fill grads[i] with dL/d(inputs[i]).
  // Entries may be left empty for inputs that need no gradient.
  using Rule = std::function<void(const Tape &, const Tensor<T> &grad_out,
                                  std::vector<Tensor<T>> &grads)>;

  // Records a user-supplied kernel application.
  Var custom(std::string op, Tensor<T> value, const std::vector<Var> &inputs,
             Rule rule);

  Gradients<T> backward(Var output, const Tensor<T> &seed) const;
  Gradients<T> backward(Var scalar_output) const;

private:
  struct Node {
    std::string op;
    Tensor<T> owned;
    const Tensor<T> *external = nullptr;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    Rule rule;
  };

  std::size_t check(Var v) const;
  bool needs(std::size_t index) const { return nodes_[index].requires_grad; }
  Var record(std::string op, Tensor<T> value, std::vector<std::size_t> inputs,
             Rule rule);

  std::uint64_t id_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

} // namespace mrinet
