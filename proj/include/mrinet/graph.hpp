#pragma once

// Network description shared by the blocks, the builders and the executor.
// A NetworkGraph is a topologically ordered list of primitive layers; each
// layer owns zero or more named parameter slots.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mrinet/kernels.hpp"
#include "mrinet/tensor.hpp"

namespace mrinet {

struct InputOp {};
struct ConvOp {
  ConvSpec spec;
  bool depthwise = false;
};
struct BatchNormOp {
  std::size_t channels = 0;
  BatchNormOptions options;
};
struct ActivationOp {
  ActivationKind kind = ActivationKind::relu;
};
struct MaxPoolOp {
  PoolSpec spec;
};
struct GlobalPoolOp {};
struct DenseOp {
  std::size_t in_units = 0;
  std::size_t out_units = 0;
};
struct DropoutOp {
  double rate = 0.0;
};
struct AddOp {};
struct SoftmaxOp {};

using LayerOp = std::variant<InputOp, ConvOp, BatchNormOp, ActivationOp, MaxPoolOp,
                             GlobalPoolOp, DenseOp, DropoutOp, AddOp, SoftmaxOp>;

// Short type name, e.g. "conv2d" or "depthwise_conv2d".
std::string op_type(const LayerOp &op);

enum class SlotKind { trainable, state };

struct ParameterSlot {
  std::string name;   // "<layer>.<role>"
  std::string role;   // kernel, bias, gamma, beta, moving_mean, moving_variance
  Shape shape;
  SlotKind kind = SlotKind::trainable;
  std::size_t layer = 0;
};

struct LayerNode {
  std::string name;
  LayerOp op;
  std::vector<std::size_t> inputs;
  Shape output_shape; // per sample: (H, W, C) or (D)
  std::string stage;  // empty outside staged sections
  std::string block;
  bool shortcut = false; // part of a projection shortcut branch
};

class NetworkGraph {
public:
  // input_shape is (H, W, C).
  NetworkGraph(std::string model, Shape input_shape);

  const std::string &model() const noexcept { return model_; }
  const Shape &input_shape() const noexcept { return nodes_.front().output_shape; }
  const std::vector<LayerNode> &nodes() const noexcept { return nodes_; }
  const LayerNode &node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<ParameterSlot> &slots() const noexcept { return slots_; }
  std::size_t output() const noexcept { return nodes_.size() - 1; }
  std::size_t num_classes() const;
  // Index of the layer with this name; LookupError when absent.
  std::size_t find(const std::string &name) const;

  // Layers created after this call carry the given stage/block labels.
  void set_scope(std::string stage, std::string block);
  void mark_shortcut(bool on) { shortcut_ = on; }

  // Each emitter validates its input shape and returns the new layer index.
  // Shape problems raise BlockConstructionError.
  std::size_t conv2d(const std::string &name, std::size_t from, ConvSpec spec);
  std::size_t depthwise_conv2d(const std::string &name, std::size_t from, ConvSpec spec);
  std::size_t batch_norm(const std::string &name, std::size_t from,
                         BatchNormOptions options = {});
  std::size_t activation(const std::string &name, std::size_t from, ActivationKind kind);
  std::size_t max_pool2d(const std::string &name, std::size_t from, PoolSpec spec);
  std::size_t global_average_pool(const std::string &name, std::size_t from);
  std::size_t dense(const std::string &name, std::size_t from, std::size_t units);
  std::size_t dropout(const std::string &name, std::size_t from, double rate);
  std::size_t add(const std::string &name, std::size_t a, std::size_t b);
  std::size_t softmax(const std::string &name, std::size_t from);

private:
  std::size_t push(std::string name, LayerOp op, std::vector<std::size_t> inputs,
                   Shape out);
  void slot(std::size_t layer, const std::string &role, Shape shape, SlotKind kind);
  const Shape &spatial(std::size_t from, const std::string &layer) const;

  std::string model_;
  std::vector<LayerNode> nodes_;
  std::vector<ParameterSlot> slots_;
  std::map<std::string, std::size_t> index_;
  std::string stage_;
  std::string block_;
  bool shortcut_ = false;
};

// Named parameter storage, ordered by slot name.
template <typename T> class ParameterSet {
public:
  struct Entry {
    Tensor<T> value;
    SlotKind kind = SlotKind::trainable;
  };

  void insert(const std::string &name, Tensor<T> value, SlotKind kind);
  bool contains(const std::string &name) const { return entries_.count(name) != 0; }
  Tensor<T> &at(const std::string &name);
  const Tensor<T> &at(const std::string &name) const;
  SlotKind kind(const std::string &name) const;
  const std::map<std::string, Entry> &entries() const noexcept { return entries_; }
  std::map<std::string, Entry> &entries() noexcept { return entries_; }
  std::size_t element_count(std::optional<SlotKind> kind = std::nullopt) const;

  template <typename U> ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto &[name, e] : entries_)
      out.insert(name, e.value.template cast<U>(), e.kind);
    return out;
  }

private:
  std::map<std::string, Entry> entries_;
};

// Kernels and dense weights: uniform in +-sqrt(6 / fan_in), with a stream
// keyed by (seed, slot name). Biases and beta start at 0, gamma at 1, the
// moving mean at 0 and the moving variance at 1.
template <typename T>
ParameterSet<T> init_parameters(const NetworkGraph &graph, std::uint64_t seed);

// Requires `params` to hold exactly the graph's slots: a missing or extra
// name raises LookupError, a wrong shape or kind raises DimensionError with
// the slot name as axis.
template <typename T>
void check_parameters(const NetworkGraph &graph, const ParameterSet<T> &params);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;

} // namespace mrinet
