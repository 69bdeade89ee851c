#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mrinet/graph.hpp"
#include "mrinet/tape.hpp"

namespace mrinet {

struct RunOptions {
  // Controls dropout, and batch normalisation unless batchnorm_mode says
  // otherwise.
  Mode mode = Mode::infer;
  // Batch-norm behaviour while mode == train. Infer keeps the running
  // statistics fixed during fine-tuning.
  Mode batchnorm_mode = Mode::train;
  // Layers for which this returns true are frozen: their parameters are
  // watched without gradients and their batch norms run in infer mode.
  std::function<bool(const LayerNode &)> frozen;
  // Dropout streams are keyed by (dropout_seed, layer name).
  std::uint64_t dropout_seed = 0;
};

// Backbone = every layer outside the classification head.
bool is_head_layer(const LayerNode &node);
bool is_backbone_layer(const LayerNode &node);

template <typename T> struct GraphRun {
  std::vector<Var> values;            // one per layer
  std::map<std::string, Var> params;  // one per slot
  Var output;
  // Input of the final softmax, when the graph ends in one; equal to output
  // otherwise.
  Var logits;
};

// Records a forward pass of `graph` on `tape`. Parameters are watched in
// place, so `params` must outlive the tape; batch norms in train mode update
// their running statistics in `params`. `bound` replaces the watched tensor
// of a slot with an existing tape entry.
template <typename T>
GraphRun<T> run_graph(Tape<T> &tape, const NetworkGraph &graph, ParameterSet<T> &params,
                      Var input, const RunOptions &options = {},
                      const std::map<std::string, Var> &bound = {});

// Convenience forward pass without gradient bookkeeping.
template <typename T>
Tensor<T> forward(const NetworkGraph &graph, ParameterSet<T> &params, const Tensor<T> &input,
                  const RunOptions &options = {});

} // namespace mrinet
