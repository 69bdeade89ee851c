#include <gtest/gtest.h>

#include <array>
#include <chrono>
#include <set>

#include "mrinet/architectures.hpp"
#include "mrinet/errors.hpp"
#include "support/print.hpp"
#include "support/random_tensor.hpp"

using namespace mrinet;

namespace {

const NetworkGraph &resnet() {
  static const NetworkGraph g = build_resnet50();
  return g;
}
const NetworkGraph &mobilenet() {
  static const NetworkGraph g = build_mobilenet_v2();
  return g;
}

} // namespace

// Expected figures come from tests/oracles/param_counts.py, which sums the
// layer configurations independently of the builders.

TEST(ResNet50, StageTable) {
  const auto &st = resnet50_stages();
  ASSERT_EQ(st.size(), 4u);
  std::vector<std::size_t> repeats, mids, outs;
  for (const auto &s : st) {
    repeats.push_back(s.repeats);
    mids.push_back(s.mid_channels);
    outs.push_back(s.out_channels);
  }
  EXPECT_EQ(repeats, (std::vector<std::size_t>{3, 4, 6, 3}));
  EXPECT_EQ(mids, (std::vector<std::size_t>{64, 128, 256, 512}));
  EXPECT_EQ(outs, (std::vector<std::size_t>{256, 512, 1024, 2048}));
}

TEST(ResNet50, Audit) {
  auto s = model_summary(resnet());
  EXPECT_EQ(s.stages, (std::vector<std::string>{"conv2_x", "conv3_x", "conv4_x", "conv5_x"}));
  EXPECT_EQ(s.blocks, 16u);
  EXPECT_EQ(s.feature_width, 2048u);
  EXPECT_EQ(s.backbone_params, 23'587'712u);
  EXPECT_EQ(s.backbone_trainable_params, 23'534'592u);
  EXPECT_EQ(s.head_params, 1'314'309u);
  EXPECT_EQ(s.total_params, 23'587'712u + 1'314'309u);
  EXPECT_EQ(s.main_path_convs, 49u);
  EXPECT_EQ(s.projection_convs, 4u);
  EXPECT_EQ(s.conv_layers, 53u);
  EXPECT_EQ(s.depthwise_convs, 0u);
  EXPECT_EQ(s.dense_layers, 3u);
  EXPECT_EQ(s.canonical_depth, 50u);
  EXPECT_EQ(s.backbone_multiply_adds, 288'848'064u);
  EXPECT_EQ(s.multiply_adds, 288'848'064u + 1'313'280u);
}

TEST(ResNet50, SpatialSizesFollowStrideRule) {
  const auto &g = resnet();
  EXPECT_EQ(g.node(g.find("conv1")).output_shape, (Shape{25, 25, 64}));
  EXPECT_EQ(g.node(g.find("pool1")).output_shape, (Shape{13, 13, 64}));
  EXPECT_EQ(g.node(g.find("conv2_x.block3.out")).output_shape, (Shape{13, 13, 256}));
  EXPECT_EQ(g.node(g.find("conv3_x.block4.out")).output_shape, (Shape{7, 7, 512}));
  EXPECT_EQ(g.node(g.find("conv4_x.block6.out")).output_shape, (Shape{4, 4, 1024}));
  EXPECT_EQ(g.node(g.find("conv5_x.block3.out")).output_shape, (Shape{2, 2, 2048}));
  EXPECT_EQ(g.node(g.find("avg_pool")).output_shape, (Shape{2048}));
  EXPECT_EQ(g.node(g.output()).output_shape, (Shape{5}));
  EXPECT_EQ(op_type(g.node(g.output()).op), "softmax");
}

TEST(ResNet50, StrideOnlyOnFirstBlockOfStage) {
  const auto &g = resnet();
  for (const auto &n : g.nodes()) {
    const auto *c = std::get_if<ConvOp>(&n.op);
    if (!c || n.block.empty())
      continue;
    const bool first = n.block.ends_with(".block1");
    if (!first) {
      EXPECT_EQ(c->spec.stride, 1u) << n.name;
    }
    if (first && n.stage != "conv2_x" && (n.name.ends_with(".conv2") || n.shortcut)) {
      EXPECT_EQ(c->spec.stride, 2u) << n.name;
    }
  }
}

TEST(MobileNetV2, StageTable) {
  const auto &st = mobilenet_v2_stages();
  std::vector<std::array<std::size_t, 4>> got;
  for (const auto &s : st)
    got.push_back({s.expansion, s.out_channels, s.repeats, s.stride});
  std::vector<std::array<std::size_t, 4>> expect{{1, 16, 1, 1},  {6, 24, 2, 2}, {6, 32, 3, 2},
                                                 {6, 64, 4, 2},  {6, 96, 3, 1}, {6, 160, 3, 2},
                                                 {6, 320, 1, 1}};
  EXPECT_EQ(got, expect);
}

TEST(MobileNetV2, Audit) {
  auto s = model_summary(mobilenet());
  EXPECT_EQ(s.stages.size(), 7u);
  EXPECT_EQ(s.blocks, 17u);
  EXPECT_EQ(s.feature_width, 1280u);
  EXPECT_EQ(s.backbone_params, 2'257'984u);
  EXPECT_EQ(s.backbone_trainable_params, 2'223'872u);
  EXPECT_EQ(s.head_params, 921'093u);
  EXPECT_EQ(s.conv_layers, 52u);
  EXPECT_EQ(s.main_path_convs, 52u);
  EXPECT_EQ(s.projection_convs, 0u);
  EXPECT_EQ(s.depthwise_convs, 17u);
  EXPECT_EQ(s.canonical_depth, 53u);
  EXPECT_EQ(s.backbone_multiply_adds, 21'280'128u);
  EXPECT_EQ(mobilenet().node(mobilenet().find("top.relu6")).output_shape, (Shape{2, 2, 1280}));
}

TEST(MobileNetV2, ShortcutRuleOverStageTable) {
  const auto &g = mobilenet();
  std::size_t in = 32;
  std::size_t checked = 0;
  for (std::size_t s = 0; s < mobilenet_v2_stages().size(); ++s) {
    const auto &st = mobilenet_v2_stages()[s];
    for (std::size_t b = 0; b < st.repeats; ++b) {
      const std::string name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1);
      const std::size_t stride = b == 0 ? st.stride : 1;
      bool has_add = true;
      try {
        g.find(name + ".add");
      } catch (const LookupError &) {
        has_add = false;
      }
      EXPECT_EQ(has_add, stride == 1 && in == st.out_channels) << name;
      const auto &dw = std::get<ConvOp>(g.node(g.find(name + ".depthwise")).op);
      EXPECT_EQ(dw.spec.stride, stride) << name;
      in = st.out_channels;
      ++checked;
    }
  }
  EXPECT_EQ(checked, 17u);
}

TEST(Summary, SymbolicShapesArePositive) {
  for (const auto &id : model_ids()) {
    auto g = build_model(id);
    for (const auto &n : g.nodes())
      for (auto d : n.output_shape)
        EXPECT_GT(d, 0u) << id << " " << n.name;
    EXPECT_EQ(g.num_classes(), 5u);
  }
}

TEST(Summary, ParameterCountEqualsSlotSum) {
  for (const auto &id : model_ids()) {
    auto g = build_model(id);
    auto s = model_summary(g);
    auto p = init_parameters<float>(g, 1);
    EXPECT_EQ(s.total_params, p.element_count()) << id;
    EXPECT_EQ(s.trainable_params, p.element_count(SlotKind::trainable)) << id;
    std::size_t rows = 0;
    for (const auto &l : s.layers)
      rows += l.params;
    EXPECT_EQ(rows, s.total_params);
  }
}

TEST(Summary, HeadOnlyGraph) {
  auto s = model_summary(head_graph(HeadSpec{}, 2048));
  EXPECT_EQ(s.total_params, 1'314'309u);
  EXPECT_EQ(s.head_params, 1'314'309u);
}

TEST(Summary, SinglePointwiseConvMultiplyAdds) {
  NetworkGraph g("probe", {50, 50, 3});
  g.conv2d("conv", 0, {1, 1, 3, 64, 1, Padding::same, true});
  EXPECT_EQ(model_summary(g).multiply_adds, 480'000u);
}

TEST(Summary, FormatMentionsConventionAndStages) {
  auto text = format_summary(model_summary(resnet()));
  auto p2 = text.find("conv2_x"), p3 = text.find("conv3_x"), p4 = text.find("conv4_x"),
       p5 = text.find("conv5_x");
  EXPECT_LT(p2, p3);
  EXPECT_LT(p3, p4);
  EXPECT_LT(p4, p5);
  EXPECT_NE(text.find("head parameters: 1314309"), std::string::npos);
  auto mtext = format_summary(model_summary(mobilenet()));
  EXPECT_NE(mtext.find("53"), std::string::npos);
  EXPECT_NE(mtext.find("depth convention"), std::string::npos);
}

TEST(Builders, DeterministicInitialisation) {
  for (const auto &id : {"resnet_mini", "mobilenetv2_mini", "mobilenetv2"}) {
    auto g1 = build_model(id), g2 = build_model(id);
    ASSERT_EQ(g1.slots().size(), g2.slots().size());
    for (std::size_t i = 0; i < g1.slots().size(); ++i)
      EXPECT_EQ(g1.slots()[i].name, g2.slots()[i].name);
    auto a = init_parameters<float>(g1, 42), b = init_parameters<float>(g2, 42),
         c = init_parameters<float>(g1, 43);
    bool differs = false;
    for (const auto &[name, e] : a.entries()) {
      EXPECT_EQ(e.value, b.at(name)) << name;
      differs = differs || !(e.value == c.at(name));
    }
    EXPECT_TRUE(differs);
  }
}

TEST(Builders, UniqueSlotNames) {
  for (const auto &id : model_ids()) {
    auto g = build_model(id);
    std::set<std::string> names;
    for (const auto &s : g.slots())
      EXPECT_TRUE(names.insert(s.name).second) << s.name;
  }
}

TEST(Builders, InputTooSmall) {
  EXPECT_THROW(build_resnet50({31, 50, 3}), BlockConstructionError);
  EXPECT_THROW(build_mobilenet_v2({50, 16, 3}), BlockConstructionError);
  EXPECT_NO_THROW(build_resnet50({32, 32, 3}));
  EXPECT_THROW(build_model("resnet18"), ConfigError);
}

TEST(Builders, ConvBiasConvention) {
  for (const auto &n : resnet().nodes())
    if (const auto *c = std::get_if<ConvOp>(&n.op)) {
      EXPECT_TRUE(c->spec.use_bias) << n.name;
    }
  for (const auto &n : mobilenet().nodes())
    if (const auto *c = std::get_if<ConvOp>(&n.op)) {
      EXPECT_FALSE(c->spec.use_bias) << n.name;
    }
}

TEST(Builders, MiniVariantsKeepTheFullHead) {
  for (const auto &id : {"resnet_mini", "mobilenetv2_mini"}) {
    auto g = build_model(id, {32, 32, 3});
    EXPECT_EQ(g.node(g.find("head.dense1")).output_shape, (Shape{512}));
    EXPECT_EQ(g.node(g.find("head.dense2")).output_shape, (Shape{512}));
    EXPECT_EQ(std::get<DropoutOp>(g.node(g.find("head.dropout")).op).rate, 0.2);
    EXPECT_EQ(g.node(g.find("head.logits")).output_shape, (Shape{5}));
  }
}

TEST(Performance, MobileNetForwardBatchEight) {
  auto g = build_mobilenet_v2();
  auto params = init_parameters<float>(g, 1);
  Rng rng(1);
  auto x = testing_support::random_tensor({8, 50, 50, 3}, rng, -1, 1).cast<float>();
  auto t0 = std::chrono::steady_clock::now();
  auto y = forward(g, params, x);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(y.shape(), (Shape{8, 5}));
  EXPECT_LT(secs, 2.0);
}
