#include "mrinet/blocks.hpp"

#include "mrinet/errors.hpp"

namespace mrinet {

ResidualBottleneckSpec bottleneck_spec(std::size_t in, std::size_t mid, std::size_t out,
                                       std::size_t stride) {
  return {in, mid, out, stride, stride != 1 || in != out};
}

void validate(const ResidualBottleneckSpec &s) {
  if (s.in_channels == 0 || s.mid_channels == 0 || s.out_channels == 0)
    throw BlockConstructionError("bottleneck channels must be positive");
  if (s.stride != 1 && s.stride != 2)
    throw BlockConstructionError("bottleneck stride must be 1 or 2, got " +
                                 std::to_string(s.stride));
  if (!s.projection_shortcut && (s.stride != 1 || s.in_channels != s.out_channels))
    throw BlockConstructionError(
        "identity shortcut cannot match a branch output of " + std::to_string(s.out_channels) +
        " channels at stride " + std::to_string(s.stride) + " from " +
        std::to_string(s.in_channels) + " input channels");
}

void validate(const InvertedResidualSpec &s) {
  if (s.in_channels == 0 || s.expansion == 0 || s.out_channels == 0)
    throw BlockConstructionError("inverted residual channels and expansion must be positive");
  if (s.stride != 1 && s.stride != 2)
    throw BlockConstructionError("inverted residual stride must be 1 or 2, got " +
                                 std::to_string(s.stride));
}

void validate(const HeadSpec &s) {
  if (s.hidden_units == 0 || s.num_classes == 0)
    throw BlockConstructionError("head needs positive unit counts");
  if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0))
    throw BlockConstructionError("head dropout rate must lie in [0, 1)");
}

std::size_t emit_residual_bottleneck(NetworkGraph &g, std::size_t from, const std::string &p,
                                     const ResidualBottleneckSpec &s, bool use_bias) {
  validate(s);
  const std::size_t in_c = g.node(from).output_shape.back();
  if (in_c != s.in_channels)
    throw BlockConstructionError("block '" + p + "' expects " + std::to_string(s.in_channels) +
                                 " channels, got " + std::to_string(in_c));
  std::size_t x = g.conv2d(p + ".conv1", from,
                           {1, 1, s.in_channels, s.mid_channels, 1, Padding::same, use_bias});
  x = g.batch_norm(p + ".conv1_bn", x);
  x = g.activation(p + ".conv1_relu", x, ActivationKind::relu);
  x = g.conv2d(p + ".conv2", x,
               {3, 3, s.mid_channels, s.mid_channels, s.stride, Padding::same, use_bias});
  x = g.batch_norm(p + ".conv2_bn", x);
  x = g.activation(p + ".conv2_relu", x, ActivationKind::relu);
  x = g.conv2d(p + ".conv3", x,
               {1, 1, s.mid_channels, s.out_channels, 1, Padding::same, use_bias});
  x = g.batch_norm(p + ".conv3_bn", x);
  std::size_t shortcut = from;
  if (s.projection_shortcut) {
    g.mark_shortcut(true);
    shortcut = g.conv2d(p + ".shortcut", from,
                        {1, 1, s.in_channels, s.out_channels, s.stride, Padding::same, use_bias});
    shortcut = g.batch_norm(p + ".shortcut_bn", shortcut);
    g.mark_shortcut(false);
  }
  x = g.add(p + ".add", x, shortcut);
  return g.activation(p + ".out", x, ActivationKind::relu);
}

std::size_t emit_inverted_residual(NetworkGraph &g, std::size_t from, const std::string &p,
                                   const InvertedResidualSpec &s) {
  validate(s);
  const std::size_t in_c = g.node(from).output_shape.back();
  if (in_c != s.in_channels)
    throw BlockConstructionError("block '" + p + "' expects " + std::to_string(s.in_channels) +
                                 " channels, got " + std::to_string(in_c));
  const std::size_t hidden = s.in_channels * s.expansion;
  std::size_t x = from;
  if (s.expansion != 1) {
    x = g.conv2d(p + ".expand", x, {1, 1, s.in_channels, hidden, 1, Padding::same, false});
    x = g.batch_norm(p + ".expand_bn", x);
    x = g.activation(p + ".expand_relu6", x, ActivationKind::relu6);
  }
  x = g.depthwise_conv2d(p + ".depthwise", x,
                         {3, 3, hidden, hidden, s.stride, Padding::same, false});
  x = g.batch_norm(p + ".depthwise_bn", x);
  x = g.activation(p + ".depthwise_relu6", x, ActivationKind::relu6);
  x = g.conv2d(p + ".project", x, {1, 1, hidden, s.out_channels, 1, Padding::same, false});
  x = g.batch_norm(p + ".project_bn", x);
  if (s.has_shortcut())
    x = g.add(p + ".add", x, from);
  return x;
}

std::size_t emit_head(NetworkGraph &g, std::size_t from, const HeadSpec &s) {
  validate(s);
  g.set_scope("head", "");
  std::size_t x = from;
  for (std::size_t i = 1; i <= s.hidden_layers; ++i) {
    x = g.dense("head.dense" + std::to_string(i), x, s.hidden_units);
    x = g.activation("head.dense" + std::to_string(i) + "_relu", x, ActivationKind::relu);
  }
  x = g.dropout("head.dropout", x, s.dropout_rate);
  x = g.dense("head.logits", x, s.num_classes);
  x = g.softmax("head.softmax", x);
  g.set_scope("", "");
  return x;
}

NetworkGraph residual_bottleneck_graph(const ResidualBottleneckSpec &s, std::size_t h,
                                       std::size_t w) {
  NetworkGraph g("residual_bottleneck", {h, w, s.in_channels});
  emit_residual_bottleneck(g, 0, "block", s);
  return g;
}

NetworkGraph inverted_residual_graph(const InvertedResidualSpec &s, std::size_t h,
                                     std::size_t w) {
  NetworkGraph g("inverted_residual", {h, w, s.in_channels});
  emit_inverted_residual(g, 0, "block", s);
  return g;
}

NetworkGraph head_graph(const HeadSpec &s, std::size_t features) {
  // A 1x1 spatial input followed by global pooling gives the flat features.
  NetworkGraph g("head", {1, 1, features});
  std::size_t x = g.global_average_pool("features", 0);
  emit_head(g, x, s);
  return g;
}

namespace {
RunOptions options_for(Mode mode, std::uint64_t seed = 0) {
  RunOptions o;
  o.mode = mode;
  o.dropout_seed = seed;
  return o;
}
} // namespace

template <typename T>
Tensor<T> residual_bottleneck_forward(const Tensor<T> &x, const ResidualBottleneckSpec &spec,
                                      ParameterSet<T> &params, Mode mode) {
  require_rank(x, 4, "bottleneck input");
  if (x.dim(3) != spec.in_channels)
    throw DimensionError("channels", "bottleneck expects " + std::to_string(spec.in_channels) +
                                         " channels, got " + std::to_string(x.dim(3)));
  auto g = residual_bottleneck_graph(spec, x.dim(1), x.dim(2));
  return forward(g, params, x, options_for(mode));
}

template <typename T>
Tensor<T> inverted_residual_forward(const Tensor<T> &x, const InvertedResidualSpec &spec,
                                    ParameterSet<T> &params, Mode mode) {
  require_rank(x, 4, "inverted residual input");
  if (x.dim(3) != spec.in_channels)
    throw DimensionError("channels", "inverted residual expects " +
                                         std::to_string(spec.in_channels) + " channels, got " +
                                         std::to_string(x.dim(3)));
  auto g = inverted_residual_graph(spec, x.dim(1), x.dim(2));
  return forward(g, params, x, options_for(mode));
}

template <typename T>
Tensor<T> head_forward(const Tensor<T> &features, const HeadSpec &spec,
                       ParameterSet<T> &params, Mode mode, std::uint64_t dropout_seed) {
  require_rank(features, 2, "head features");
  const std::size_t d = params.at("head.dense1.kernel").dim(0);
  if (features.dim(1) != d)
    throw DimensionError("features", "head expects width " + std::to_string(d) + ", got " +
                                         std::to_string(features.dim(1)));
  auto g = head_graph(spec, d);
  return forward(g, params, features.reshaped({features.dim(0), 1, 1, d}),
                 options_for(mode, dropout_seed));
}

#define MRINET_INSTANTIATE(T)                                                              \
  template Tensor<T> residual_bottleneck_forward(                                          \
      const Tensor<T> &, const ResidualBottleneckSpec &, ParameterSet<T> &, Mode);         \
  template Tensor<T> inverted_residual_forward(const Tensor<T> &,                          \
                                               const InvertedResidualSpec &,               \
                                               ParameterSet<T> &, Mode);                   \
  template Tensor<T> head_forward(const Tensor<T> &, const HeadSpec &, ParameterSet<T> &,   \
                                  Mode, std::uint64_t);

MRINET_INSTANTIATE(float)
MRINET_INSTANTIATE(double)

} // namespace mrinet
