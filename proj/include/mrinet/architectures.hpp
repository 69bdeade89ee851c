#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrinet/blocks.hpp"
#include "mrinet/graph.hpp"

namespace mrinet {

// (mid, out, repeats, first stride) per ResNet stage.
struct ResNetStage {
  std::string name;
  std::size_t mid_channels;
  std::size_t out_channels;
  std::size_t repeats;
  std::size_t stride;
};

// (t, c, n, s) per MobileNetV2 stage.
struct MobileNetStage {
  std::size_t expansion;
  std::size_t out_channels;
  std::size_t repeats;
  std::size_t stride;
};

const std::vector<ResNetStage> &resnet50_stages();
const std::vector<MobileNetStage> &mobilenet_v2_stages();

inline const Shape default_input_shape{50, 50, 3};

// Full-size models. Inputs below 32x32 raise BlockConstructionError.
NetworkGraph build_resnet50(const Shape &input_shape = default_input_shape,
                            std::size_t num_classes = 5);
NetworkGraph build_mobilenet_v2(const Shape &input_shape = default_input_shape,
                                std::size_t num_classes = 5);

// Reduced-depth variants with the same stem style and the same head, for
// quick runs: one bottleneck stage (resnet_mini) or two inverted residual
// stages (mobilenetv2_mini).
NetworkGraph build_resnet_mini(const Shape &input_shape = default_input_shape,
                               std::size_t num_classes = 5);
NetworkGraph build_mobilenet_v2_mini(const Shape &input_shape = default_input_shape,
                                     std::size_t num_classes = 5);

// Known ids: resnet50, mobilenetv2, resnet_mini, mobilenetv2_mini.
const std::vector<std::string> &model_ids();
NetworkGraph build_model(const std::string &id, const Shape &input_shape = default_input_shape,
                         std::size_t num_classes = 5);
// Preprocessing mode that goes with a model: resnet_means or scale_pm1.
std::string default_preprocessing(const std::string &id);

struct LayerSummary {
  std::string name;
  std::string type;
  std::string stage;
  Shape output_shape;
  std::size_t params = 0;
  std::uint64_t multiply_adds = 0;
};

struct ModelSummary {
  std::string model;
  Shape input_shape;
  std::size_t conv_layers = 0;       // every convolution kernel
  std::size_t main_path_convs = 0;   // excluding projection shortcuts
  std::size_t depthwise_convs = 0;
  std::size_t projection_convs = 0;
  std::size_t dense_layers = 0;
  std::size_t total_layers = 0;      // every layer except the input
  std::size_t blocks = 0;
  std::vector<std::string> stages;
  std::size_t feature_width = 0;
  std::size_t trainable_params = 0;
  std::size_t state_params = 0;
  std::size_t total_params = 0;
  std::size_t backbone_params = 0;   // trainable + state outside the head
  std::size_t backbone_trainable_params = 0;
  std::size_t head_params = 0;
  std::uint64_t multiply_adds = 0;   // per image
  std::uint64_t backbone_multiply_adds = 0;
  // main_path_convs + 1 for the single classifier layer of the original
  // network.
  std::size_t canonical_depth = 0;
  std::string depth_convention;
  std::vector<LayerSummary> layers;
};

// Multiply-adds: kh*kw*Cin*Cout*Hout*Wout per convolution (Cout dropped for
// depthwise) plus D*U per dense layer.
ModelSummary model_summary(const NetworkGraph &graph);
std::string format_summary(const ModelSummary &summary);

} // namespace mrinet
