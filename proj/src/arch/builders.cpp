#include "mrinet/architectures.hpp"

#include "mrinet/errors.hpp"

namespace mrinet {

const std::vector<ResNetStage> &resnet50_stages() {
  static const std::vector<ResNetStage> stages{{"conv2_x", 64, 256, 3, 1},
                                               {"conv3_x", 128, 512, 4, 2},
                                               {"conv4_x", 256, 1024, 6, 2},
                                               {"conv5_x", 512, 2048, 3, 2}};
  return stages;
}

const std::vector<MobileNetStage> &mobilenet_v2_stages() {
  static const std::vector<MobileNetStage> stages{{1, 16, 1, 1},  {6, 24, 2, 2},
                                                  {6, 32, 3, 2},  {6, 64, 4, 2},
                                                  {6, 96, 3, 1},  {6, 160, 3, 2},
                                                  {6, 320, 1, 1}};
  return stages;
}

namespace {

void check_input(const std::string &model, const Shape &input) {
  if (input.size() != 3 || input[0] < 32 || input[1] < 32 || input[2] == 0)
    throw BlockConstructionError(model + " needs an input of at least 32x32 with channels, got " +
                                 to_string(input));
}

std::size_t resnet_stem(NetworkGraph &g, std::size_t width) {
  const std::size_t c = g.input_shape()[2];
  std::size_t x = g.conv2d("conv1", 0, {7, 7, c, width, 2, Padding::same, true});
  x = g.batch_norm("conv1_bn", x);
  x = g.activation("conv1_relu", x, ActivationKind::relu);
  return g.max_pool2d("pool1", x, {3, 3, 2, Padding::same});
}

std::size_t resnet_stages(NetworkGraph &g, std::size_t x, const std::vector<ResNetStage> &stages) {
  std::size_t in = g.node(x).output_shape[2];
  for (const auto &st : stages) {
    for (std::size_t b = 0; b < st.repeats; ++b) {
      const std::string name = st.name + ".block" + std::to_string(b + 1);
      g.set_scope(st.name, name);
      auto spec = bottleneck_spec(in, st.mid_channels, st.out_channels, b == 0 ? st.stride : 1);
      x = emit_residual_bottleneck(g, x, name, spec);
      in = st.out_channels;
    }
  }
  g.set_scope("", "");
  return x;
}

std::size_t mobilenet_stem(NetworkGraph &g, std::size_t width) {
  const std::size_t c = g.input_shape()[2];
  g.set_scope("stem", "");
  std::size_t x = g.conv2d("stem.conv", 0, {3, 3, c, width, 2, Padding::same, false});
  x = g.batch_norm("stem.bn", x);
  x = g.activation("stem.relu6", x, ActivationKind::relu6);
  return x;
}

std::size_t mobilenet_stages(NetworkGraph &g, std::size_t x,
                             const std::vector<MobileNetStage> &stages) {
  std::size_t in = g.node(x).output_shape[2];
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto &st = stages[s];
    const std::string stage = "stage" + std::to_string(s + 1);
    for (std::size_t b = 0; b < st.repeats; ++b) {
      const std::string name = stage + ".block" + std::to_string(b + 1);
      g.set_scope(stage, name);
      x = emit_inverted_residual(g, x, name,
                                 {in, st.expansion, st.out_channels, b == 0 ? st.stride : 1});
      in = st.out_channels;
    }
  }
  return x;
}

std::size_t mobilenet_top(NetworkGraph &g, std::size_t x, std::size_t width) {
  const std::size_t in = g.node(x).output_shape[2];
  g.set_scope("top", "");
  x = g.conv2d("top.conv", x, {1, 1, in, width, 1, Padding::same, false});
  x = g.batch_norm("top.bn", x);
  x = g.activation("top.relu6", x, ActivationKind::relu6);
  g.set_scope("", "");
  return x;
}

NetworkGraph finish(NetworkGraph g, std::size_t x, std::size_t num_classes) {
  x = g.global_average_pool("avg_pool", x);
  HeadSpec head;
  head.num_classes = num_classes;
  emit_head(g, x, head);
  return g;
}

} // namespace

NetworkGraph build_resnet50(const Shape &input, std::size_t num_classes) {
  check_input("resnet50", input);
  NetworkGraph g("resnet50", input);
  std::size_t x = resnet_stem(g, 64);
  x = resnet_stages(g, x, resnet50_stages());
  return finish(std::move(g), x, num_classes);
}

NetworkGraph build_mobilenet_v2(const Shape &input, std::size_t num_classes) {
  check_input("mobilenetv2", input);
  NetworkGraph g("mobilenetv2", input);
  std::size_t x = mobilenet_stem(g, 32);
  x = mobilenet_stages(g, x, mobilenet_v2_stages());
  x = mobilenet_top(g, x, 1280);
  return finish(std::move(g), x, num_classes);
}

NetworkGraph build_resnet_mini(const Shape &input, std::size_t num_classes) {
  check_input("resnet_mini", input);
  NetworkGraph g("resnet_mini", input);
  std::size_t x = resnet_stem(g, 16);
  x = resnet_stages(g, x, {{"conv2_x", 8, 32, 1, 1}});
  return finish(std::move(g), x, num_classes);
}

NetworkGraph build_mobilenet_v2_mini(const Shape &input, std::size_t num_classes) {
  check_input("mobilenetv2_mini", input);
  NetworkGraph g("mobilenetv2_mini", input);
  std::size_t x = mobilenet_stem(g, 16);
  x = mobilenet_stages(g, x, {{1, 8, 1, 1}, {6, 16, 1, 2}});
  x = mobilenet_top(g, x, 64);
  return finish(std::move(g), x, num_classes);
}

const std::vector<std::string> &model_ids() {
  static const std::vector<std::string> ids{"resnet50", "mobilenetv2", "resnet_mini",
                                            "mobilenetv2_mini"};
  return ids;
}

NetworkGraph build_model(const std::string &id, const Shape &input, std::size_t num_classes) {
  if (id == "resnet50")
    return build_resnet50(input, num_classes);
  if (id == "mobilenetv2")
    return build_mobilenet_v2(input, num_classes);
  if (id == "resnet_mini")
    return build_resnet_mini(input, num_classes);
  if (id == "mobilenetv2_mini")
    return build_mobilenet_v2_mini(input, num_classes);
  throw ConfigError("unknown model '" + id +
                    "' (expected resnet50, mobilenetv2, resnet_mini or mobilenetv2_mini)");
}

std::string default_preprocessing(const std::string &id) {
  if (id == "resnet50" || id == "resnet_mini")
    return "resnet_means";
  if (id == "mobilenetv2" || id == "mobilenetv2_mini")
    return "scale_pm1";
  throw ConfigError("unknown model '" + id + "'");
}

} // namespace mrinet
