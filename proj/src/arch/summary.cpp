#include "mrinet/architectures.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

#include "mrinet/executor.hpp"

namespace mrinet {

ModelSummary model_summary(const NetworkGraph &g) {
  ModelSummary s;
  s.model = g.model();
  s.input_shape = g.input_shape();

  std::vector<std::size_t> layer_params(g.nodes().size(), 0);
  for (const auto &slot : g.slots()) {
    const std::size_t n = element_count(slot.shape);
    layer_params[slot.layer] += n;
    (slot.kind == SlotKind::trainable ? s.trainable_params : s.state_params) += n;
    if (is_head_layer(g.node(slot.layer))) {
      s.head_params += n;
    } else {
      s.backbone_params += n;
      if (slot.kind == SlotKind::trainable)
        s.backbone_trainable_params += n;
    }
  }
  s.total_params = s.trainable_params + s.state_params;

  std::string last_block;
  for (std::size_t i = 1; i < g.nodes().size(); ++i) {
    const LayerNode &n = g.node(i);
    LayerSummary row{n.name, op_type(n.op), n.stage, n.output_shape, layer_params[i], 0};
    if (const auto *c = std::get_if<ConvOp>(&n.op)) {
      const auto &sp = c->spec;
      const std::uint64_t spatial = n.output_shape[0] * n.output_shape[1];
      row.multiply_adds = sp.kernel_h * sp.kernel_w * sp.in_channels * spatial *
                          (c->depthwise ? 1 : sp.out_channels);
      ++s.conv_layers;
      if (c->depthwise)
        ++s.depthwise_convs;
      if (n.shortcut)
        ++s.projection_convs;
      else
        ++s.main_path_convs;
    } else if (const auto *d = std::get_if<DenseOp>(&n.op)) {
      row.multiply_adds = d->in_units * d->out_units;
      ++s.dense_layers;
    } else if (std::holds_alternative<GlobalPoolOp>(n.op) && !is_head_layer(n)) {
      s.feature_width = n.output_shape[0];
    }
    s.multiply_adds += row.multiply_adds;
    if (!is_head_layer(n))
      s.backbone_multiply_adds += row.multiply_adds;
    if (!n.stage.empty() && !n.block.empty() &&
        std::find(s.stages.begin(), s.stages.end(), n.stage) == s.stages.end())
      s.stages.push_back(n.stage);
    if (!n.block.empty() && n.block != last_block) {
      ++s.blocks;
      last_block = n.block;
    }
    s.layers.push_back(std::move(row));
  }
  s.total_layers = s.layers.size();
  s.canonical_depth = s.main_path_convs + 1;
  s.depth_convention =
      "depth = main-path convolutions (depthwise included, projection shortcuts excluded) "
      "+ 1 for the original single classifier layer; the custom head is not counted";
  return s;
}

std::string format_summary(const ModelSummary &s) {
  std::ostringstream out;
  out << fmt::format("model: {}  input: {}\n\n", s.model, to_string(s.input_shape));
  out << fmt::format("{:<34} {:<20} {:<16} {:>12} {:>14}\n", "layer", "type", "output",
                     "params", "mult-adds");
  for (const auto &l : s.layers)
    out << fmt::format("{:<34} {:<20} {:<16} {:>12} {:>14}\n", l.name, l.type,
                       to_string(l.output_shape), l.params, l.multiply_adds);
  out << "\n";
  std::string stages;
  for (const auto &st : s.stages)
    stages += (stages.empty() ? "" : " ") + st;
  out << fmt::format("stages: {}\n", stages);
  out << fmt::format("blocks: {}\n", s.blocks);
  out << fmt::format("conv layers: {} (main path {}, depthwise {}, projection shortcuts {})\n",
                     s.conv_layers, s.main_path_convs, s.depthwise_convs, s.projection_convs);
  out << fmt::format("dense layers: {}\n", s.dense_layers);
  out << fmt::format("total layers: {}\n", s.total_layers);
  out << fmt::format("canonical depth: {}\n", s.canonical_depth);
  out << fmt::format("depth convention: {}\n", s.depth_convention);
  if (s.model == "mobilenetv2")
    out << fmt::format("reference figure: 53 convolutional layers; under this convention the "
                       "count is {}\n",
                       s.canonical_depth);
  if (s.model == "resnet50")
    out << fmt::format("reference figure: 50 layers; under this convention the count is {}\n",
                       s.canonical_depth);
  out << fmt::format("feature width: {}\n", s.feature_width);
  out << fmt::format("parameters: {} total ({} trainable, {} batch-norm running statistics)\n",
                     s.total_params, s.trainable_params, s.state_params);
  out << fmt::format("backbone parameters: {} ({} trainable)\n", s.backbone_params,
                     s.backbone_trainable_params);
  out << fmt::format("head parameters: {}\n", s.head_params);
  out << fmt::format("multiply-adds per image: {} (backbone {})\n", s.multiply_adds,
                     s.backbone_multiply_adds);
  return out.str();
}

} // namespace mrinet
