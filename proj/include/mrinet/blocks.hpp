#pragma once

// Composite blocks. Each block is emitted into a NetworkGraph as primitive
// layers; the *_forward functions run a block on its own for testing.

#include <cstdint>
#include <string>

#include "mrinet/executor.hpp"
#include "mrinet/graph.hpp"

namespace mrinet {

struct ResidualBottleneckSpec {
  std::size_t in_channels = 0;
  std::size_t mid_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  bool projection_shortcut = false;
};

// Spec with the projection flag set when the shape changes.
ResidualBottleneckSpec bottleneck_spec(std::size_t in, std::size_t mid, std::size_t out,
                                       std::size_t stride);

struct InvertedResidualSpec {
  std::size_t in_channels = 0;
  std::size_t expansion = 1;
  std::size_t out_channels = 0;
  std::size_t stride = 1;

  bool has_shortcut() const noexcept { return stride == 1 && in_channels == out_channels; }
};

struct HeadSpec {
  std::size_t hidden_units = 512;
  std::size_t hidden_layers = 2;
  double dropout_rate = 0.2;
  std::size_t num_classes = 5;
};

// Throw BlockConstructionError for invalid specs, including an identity
// shortcut whose shape would not match the residual branch.
void validate(const ResidualBottleneckSpec &spec);
void validate(const InvertedResidualSpec &spec);
void validate(const HeadSpec &spec);

// relu(F(x) + shortcut(x)) with F = 1x1 -> BN -> relu -> 3x3/stride -> BN ->
// relu -> 1x1 -> BN. Layers are named "<prefix>.conv1", "<prefix>.conv1_bn",
// ..., "<prefix>.shortcut", "<prefix>.add", "<prefix>.out".
std::size_t emit_residual_bottleneck(NetworkGraph &graph, std::size_t from,
                                     const std::string &prefix,
                                     const ResidualBottleneckSpec &spec, bool use_bias = true);

// [1x1 expand -> BN -> relu6] -> 3x3 depthwise/stride -> BN -> relu6 -> 1x1
// project -> BN, plus the input when has_shortcut().
std::size_t emit_inverted_residual(NetworkGraph &graph, std::size_t from,
                                   const std::string &prefix, const InvertedResidualSpec &spec);

// dense -> relu (hidden_layers times) -> dropout -> dense -> softmax, under
// the "head." prefix.
std::size_t emit_head(NetworkGraph &graph, std::size_t from, const HeadSpec &spec);

// Stand-alone graphs holding one block with input (H, W, C).
NetworkGraph residual_bottleneck_graph(const ResidualBottleneckSpec &spec, std::size_t height,
                                       std::size_t width);
NetworkGraph inverted_residual_graph(const InvertedResidualSpec &spec, std::size_t height,
                                     std::size_t width);
NetworkGraph head_graph(const HeadSpec &spec, std::size_t features);

// Parameters use the slot names of the matching *_graph (prefix "block" or
// "head").
template <typename T>
Tensor<T> residual_bottleneck_forward(const Tensor<T> &x, const ResidualBottleneckSpec &spec,
                                      ParameterSet<T> &params, Mode mode);
template <typename T>
Tensor<T> inverted_residual_forward(const Tensor<T> &x, const InvertedResidualSpec &spec,
                                    ParameterSet<T> &params, Mode mode);
template <typename T>
Tensor<T> head_forward(const Tensor<T> &features, const HeadSpec &spec,
                       ParameterSet<T> &params, Mode mode, std::uint64_t dropout_seed);

} // namespace mrinet
