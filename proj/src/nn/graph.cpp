#include "mrinet/graph.hpp"

#include <cmath>

#include "mrinet/errors.hpp"
#include "mrinet/rng.hpp"

namespace mrinet {

namespace {
template <class... F> struct overloaded : F... {
  using F::operator()...;
};
template <class... F> overloaded(F...) -> overloaded<F...>;
} // namespace

std::string op_type(const LayerOp &op) {
  return std::visit(
      overloaded{
          [](const InputOp &) { return std::string("input"); },
          [](const ConvOp &c) {
            return std::string(c.depthwise ? "depthwise_conv2d" : "conv2d");
          },
          [](const BatchNormOp &) { return std::string("batch_norm"); },
          [](const ActivationOp &a) { return to_string(a.kind); },
          [](const MaxPoolOp &) { return std::string("max_pool2d"); },
          [](const GlobalPoolOp &) { return std::string("global_average_pool"); },
          [](const DenseOp &) { return std::string("dense"); },
          [](const DropoutOp &) { return std::string("dropout"); },
          [](const AddOp &) { return std::string("add"); },
          [](const SoftmaxOp &) { return std::string("softmax"); },
      },
      op);
}

NetworkGraph::NetworkGraph(std::string model, Shape input_shape) : model_(std::move(model)) {
  if (input_shape.size() != 3 || element_count(input_shape) == 0)
    throw BlockConstructionError("input shape must be (H, W, C) with positive extents, got " +
                                 to_string(input_shape));
  push("input", InputOp{}, {}, std::move(input_shape));
}

std::size_t NetworkGraph::num_classes() const {
  const auto &last = nodes_.back().output_shape;
  return last.size() == 1 ? last[0] : 0;
}

std::size_t NetworkGraph::find(const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end())
    throw LookupError("no layer named '" + name + "' in " + model_);
  return it->second;
}

void NetworkGraph::set_scope(std::string stage, std::string block) {
  stage_ = std::move(stage);
  block_ = std::move(block);
}

std::size_t NetworkGraph::push(std::string name, LayerOp op, std::vector<std::size_t> inputs,
                               Shape out) {
  if (index_.count(name))
    throw BlockConstructionError("duplicate layer name '" + name + "'");
  for (std::size_t i : inputs)
    if (i >= nodes_.size())
      throw BlockConstructionError("layer '" + name + "' reads a layer that does not exist");
  for (std::size_t d : out)
    if (d == 0)
      throw BlockConstructionError("layer '" + name + "' would produce an empty output " +
                                   to_string(out));
  index_[name] = nodes_.size();
  nodes_.push_back({std::move(name), std::move(op), std::move(inputs), std::move(out), stage_,
                    block_, shortcut_});
  return nodes_.size() - 1;
}

void NetworkGraph::slot(std::size_t layer, const std::string &role, Shape shape,
                        SlotKind kind) {
  slots_.push_back({nodes_[layer].name + "." + role, role, std::move(shape), kind, layer});
}

const Shape &NetworkGraph::spatial(std::size_t from, const std::string &layer) const {
  if (from >= nodes_.size())
    throw BlockConstructionError("layer '" + layer + "' reads a layer that does not exist");
  const Shape &s = nodes_[from].output_shape;
  if (s.size() != 3)
    throw BlockConstructionError("layer '" + layer + "' needs a (H, W, C) input, got " +
                                 to_string(s));
  return s;
}

namespace {
std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, Padding p,
                        const std::string &layer) {
  try {
    return axis_geometry(in, k, stride, p, "spatial").out;
  } catch (const Error &e) {
    throw BlockConstructionError("layer '" + layer + "': " + e.what());
  }
}
} // namespace

std::size_t NetworkGraph::conv2d(const std::string &name, std::size_t from, ConvSpec spec) {
  const Shape in = spatial(from, name);
  if (spec.in_channels != in[2])
    throw BlockConstructionError("layer '" + name + "' expects " +
                                 std::to_string(spec.in_channels) + " input channels, got " +
                                 std::to_string(in[2]));
  if (spec.out_channels == 0 || spec.stride == 0 || spec.kernel_h == 0 || spec.kernel_w == 0)
    throw BlockConstructionError("layer '" + name + "' has a zero-sized spec");
  Shape out{conv_extent(in[0], spec.kernel_h, spec.stride, spec.padding, name),
            conv_extent(in[1], spec.kernel_w, spec.stride, spec.padding, name),
            spec.out_channels};
  std::size_t id = push(name, ConvOp{spec, false}, {from}, out);
  slot(id, "kernel", {spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels},
       SlotKind::trainable);
  if (spec.use_bias)
    slot(id, "bias", {spec.out_channels}, SlotKind::trainable);
  return id;
}

std::size_t NetworkGraph::depthwise_conv2d(const std::string &name, std::size_t from,
                                           ConvSpec spec) {
  const Shape in = spatial(from, name);
  if (spec.in_channels != in[2] || spec.out_channels != in[2])
    throw BlockConstructionError("depthwise layer '" + name + "' must keep " +
                                 std::to_string(in[2]) + " channels");
  if (spec.stride == 0 || spec.kernel_h == 0 || spec.kernel_w == 0)
    throw BlockConstructionError("layer '" + name + "' has a zero-sized spec");
  Shape out{conv_extent(in[0], spec.kernel_h, spec.stride, spec.padding, name),
            conv_extent(in[1], spec.kernel_w, spec.stride, spec.padding, name), in[2]};
  std::size_t id = push(name, ConvOp{spec, true}, {from}, out);
  slot(id, "kernel", {spec.kernel_h, spec.kernel_w, in[2], 1}, SlotKind::trainable);
  if (spec.use_bias)
    slot(id, "bias", {in[2]}, SlotKind::trainable);
  return id;
}

std::size_t NetworkGraph::batch_norm(const std::string &name, std::size_t from,
                                     BatchNormOptions options) {
  const Shape in = spatial(from, name);
  std::size_t c = in[2];
  std::size_t id = push(name, BatchNormOp{c, options}, {from}, in);
  slot(id, "beta", {c}, SlotKind::trainable);
  slot(id, "gamma", {c}, SlotKind::trainable);
  slot(id, "moving_mean", {c}, SlotKind::state);
  slot(id, "moving_variance", {c}, SlotKind::state);
  return id;
}

std::size_t NetworkGraph::activation(const std::string &name, std::size_t from,
                                     ActivationKind kind) {
  if (from >= nodes_.size())
    throw BlockConstructionError("layer '" + name + "' reads a layer that does not exist");
  return push(name, ActivationOp{kind}, {from}, nodes_[from].output_shape);
}

std::size_t NetworkGraph::max_pool2d(const std::string &name, std::size_t from, PoolSpec spec) {
  const Shape in = spatial(from, name);
  Shape out{conv_extent(in[0], spec.window_h, spec.stride, spec.padding, name),
            conv_extent(in[1], spec.window_w, spec.stride, spec.padding, name), in[2]};
  return push(name, MaxPoolOp{spec}, {from}, out);
}

std::size_t NetworkGraph::global_average_pool(const std::string &name, std::size_t from) {
  const Shape in = spatial(from, name);
  return push(name, GlobalPoolOp{}, {from}, {in[2]});
}

std::size_t NetworkGraph::dense(const std::string &name, std::size_t from, std::size_t units) {
  if (from >= nodes_.size())
    throw BlockConstructionError("layer '" + name + "' reads a layer that does not exist");
  const Shape in = nodes_[from].output_shape;
  if (in.size() != 1)
    throw BlockConstructionError("dense layer '" + name + "' needs a flat input, got " +
                                 to_string(in));
  if (units == 0)
    throw BlockConstructionError("dense layer '" + name + "' needs at least one unit");
  std::size_t id = push(name, DenseOp{in[0], units}, {from}, {units});
  slot(id, "kernel", {in[0], units}, SlotKind::trainable);
  slot(id, "bias", {units}, SlotKind::trainable);
  return id;
}

std::size_t NetworkGraph::dropout(const std::string &name, std::size_t from, double rate) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw BlockConstructionError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (from >= nodes_.size())
    throw BlockConstructionError("layer '" + name + "' reads a layer that does not exist");
  return push(name, DropoutOp{rate}, {from}, nodes_[from].output_shape);
}

std::size_t NetworkGraph::add(const std::string &name, std::size_t a, std::size_t b) {
  if (a >= nodes_.size() || b >= nodes_.size())
    throw BlockConstructionError("layer '" + name + "' reads a layer that does not exist");
  const Shape &sa = nodes_[a].output_shape, &sb = nodes_[b].output_shape;
  if (sa != sb)
    throw BlockConstructionError("cannot add '" + nodes_[a].name + "' " + to_string(sa) +
                                 " and '" + nodes_[b].name + "' " + to_string(sb) + " in '" +
                                 name + "'");
  return push(name, AddOp{}, {a, b}, sa);
}

std::size_t NetworkGraph::softmax(const std::string &name, std::size_t from) {
  if (from >= nodes_.size())
    throw BlockConstructionError("layer '" + name + "' reads a layer that does not exist");
  const Shape &in = nodes_[from].output_shape;
  if (in.size() != 1)
    throw BlockConstructionError("softmax '" + name + "' needs a flat input");
  return push(name, SoftmaxOp{}, {from}, in);
}

// --- ParameterSet ------------------------------------------------------------

template <typename T>
void ParameterSet<T>::insert(const std::string &name, Tensor<T> value, SlotKind kind) {
  entries_[name] = Entry{std::move(value), kind};
}

template <typename T> Tensor<T> &ParameterSet<T>::at(const std::string &name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw LookupError("no parameter named '" + name + "'");
  return it->second.value;
}

template <typename T> const Tensor<T> &ParameterSet<T>::at(const std::string &name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw LookupError("no parameter named '" + name + "'");
  return it->second.value;
}

template <typename T> SlotKind ParameterSet<T>::kind(const std::string &name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw LookupError("no parameter named '" + name + "'");
  return it->second.kind;
}

template <typename T>
std::size_t ParameterSet<T>::element_count(std::optional<SlotKind> kind) const {
  std::size_t n = 0;
  for (const auto &[name, e] : entries_)
    if (!kind || e.kind == *kind)
      n += e.value.size();
  return n;
}

namespace {
std::size_t fan_in(const NetworkGraph &g, const ParameterSlot &s) {
  const auto &op = g.node(s.layer).op;
  if (const auto *c = std::get_if<ConvOp>(&op))
    return c->spec.kernel_h * c->spec.kernel_w * (c->depthwise ? 1 : c->spec.in_channels);
  return std::get<DenseOp>(op).in_units;
}
} // namespace

template <typename T>
ParameterSet<T> init_parameters(const NetworkGraph &graph, std::uint64_t seed) {
  ParameterSet<T> params;
  for (const auto &s : graph.slots()) {
    Tensor<T> t(s.shape);
    if (s.role == "kernel") {
      const double limit = std::sqrt(6.0 / double(fan_in(graph, s)));
      Rng rng = Rng::keyed({seed, hash_name(s.name)});
      for (auto &v : t.data())
        v = static_cast<T>(rng.uniform(-limit, limit));
    } else if (s.role == "gamma" || s.role == "moving_variance") {
      t.fill(T{1});
    }
    params.insert(s.name, std::move(t), s.kind);
  }
  return params;
}

template <typename T>
void check_parameters(const NetworkGraph &graph, const ParameterSet<T> &params) {
  for (const auto &s : graph.slots()) {
    if (!params.contains(s.name))
      throw LookupError("parameter set lacks slot '" + s.name + "'");
    if (params.at(s.name).shape() != s.shape)
      throw DimensionError(s.name, "expected shape " + to_string(s.shape) + ", got " +
                                       to_string(params.at(s.name).shape()));
    if (params.kind(s.name) != s.kind)
      throw DimensionError(s.name, "slot kind differs from the graph");
  }
  if (params.entries().size() != graph.slots().size()) {
    for (const auto &[name, e] : params.entries()) {
      bool known = false;
      for (const auto &s : graph.slots())
        known = known || s.name == name;
      if (!known)
        throw LookupError("parameter '" + name + "' has no slot in " + graph.model());
    }
  }
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template ParameterSet<float> init_parameters(const NetworkGraph &, std::uint64_t);
template ParameterSet<double> init_parameters(const NetworkGraph &, std::uint64_t);
template void check_parameters(const NetworkGraph &, const ParameterSet<float> &);
template void check_parameters(const NetworkGraph &, const ParameterSet<double> &);

} // namespace mrinet
