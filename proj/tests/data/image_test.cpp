#include <gtest/gtest.h>

#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mrinet/errors.hpp"
#include "mrinet/image.hpp"
#include "support/print.hpp"
#include "support/random_tensor.hpp"
#include "support/synthetic_data.hpp"
#include "support/temp_dir.hpp"

using namespace mrinet;
using testing_support::TempDir;

namespace {

Tensor<float> grid(std::size_t h, std::size_t w, const std::vector<float> &values) {
  Tensor<float> img({h, w, 3});
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      img[i * 3 + c] = values[i] + 100.0f * float(c);
  return img;
}

Tensor<float> random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  return testing_support::random_tensor({h, w, 3}, rng, 0, 255).cast<float>();
}

} // namespace

TEST(Resize, SameSizeIsBitwiseIdentity) {
  auto img = random_image(50, 50, 1);
  EXPECT_EQ(resize_bilinear(img, 50, 50), img);
}

TEST(Resize, ConstantImageStaysConstant) {
  Tensor<float> img({100, 100, 3}, 87.0f);
  auto out = resize_bilinear(img, 50, 50);
  EXPECT_EQ(out.shape(), (Shape{50, 50, 3}));
  for (float v : out.data())
    ASSERT_EQ(v, 87.0f);
  auto odd = resize_bilinear(img, 73, 31);
  for (float v : odd.data())
    ASSERT_EQ(v, 87.0f);
}

TEST(Resize, CheckerboardHalvesToBlockMeans) {
  std::vector<float> board(16);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      board[y * 4 + x] = (x + y) % 2 ? 255.0f : 0.0f;
  auto out = resize_bilinear(grid(4, 4, board), 2, 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_EQ(out[i * 3 + c], 127.5f + 100.0f * float(c));

  // Source coordinate of output pixel j is (j + 0.5) * 2 - 0.5 = 2j + 0.5,
  // so every output averages its 2x2 block with weight 1/4.
  std::vector<float> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  auto blocks = resize_bilinear(grid(4, 4, v), 2, 2);
  const float expect[4] = {(1 + 2 + 5 + 6) / 4.0f, (3 + 4 + 7 + 8) / 4.0f,
                           (9 + 10 + 13 + 14) / 4.0f, (11 + 12 + 15 + 16) / 4.0f};
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(blocks[i * 3], expect[i]);
}

TEST(Resize, UpsampleClampsAtEdges) {
  auto out = resize_bilinear(grid(1, 2, {10, 20}), 1, 4);
  // src x = (x + 0.5) / 2 - 0.5 -> -0.25 (clamped), 0.25, 0.75, 1.25 (clamped).
  EXPECT_EQ(out[0], 10.0f);
  EXPECT_EQ(out[3], 12.5f);
  EXPECT_EQ(out[6], 17.5f);
  EXPECT_EQ(out[9], 20.0f);
}

TEST(Decode, PngRoundtripAndGrayscale) {
  TempDir dir;
  auto img = testing_support::class_image(2, 5, 12);
  testing_support::write_bytes(dir.path() / "a.png", encode_png(img));
  EXPECT_EQ(decode_image(dir.path() / "a.png"), img);
  auto resized = decode_and_resize(dir.path() / "a.png", 6, 6);
  EXPECT_EQ(resized.shape(), (Shape{6, 6, 3}));

  cv::Mat gray(3, 2, CV_8UC1);
  for (int i = 0; i < 6; ++i)
    gray.data[i] = static_cast<unsigned char>(40 * i);
  cv::imwrite((dir.path() / "g.png").string(), gray);
  auto g = decode_image(dir.path() / "g.png");
  ASSERT_EQ(g.shape(), (Shape{3, 2, 3}));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_EQ(g[i * 3 + c], float(40 * i));

  cv::Mat colour(4, 4, CV_8UC3, cv::Scalar(10, 20, 200));
  cv::imwrite((dir.path() / "c.jpg").string(), colour);
  auto j = decode_image(dir.path() / "c.jpg");
  EXPECT_NEAR(j[0], 200.0f, 3.0f); // red first
  EXPECT_NEAR(j[2], 10.0f, 3.0f);
}

TEST(Decode, BadFilesNameThePath) {
  TempDir dir;
  testing_support::write_bytes(dir.path() / "bad.png", "\x89PNG\r\n\x1a\ngarbage");
  try {
    decode_image(dir.path() / "bad.png");
    FAIL();
  } catch (const DecodeError &e) {
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
  EXPECT_THROW(decode_image(dir.path() / "missing.png"), DecodeError);
}

TEST(Augment, ZeroMagnitudesAreIdentity) {
  AugmentParams p{0, 0, 0, 0};
  auto img = random_image(20, 24, 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = Rng::keyed({seed, 0, 1});
    Sample s{img, 3, "x.png", {}};
    auto out = augment_sample(s, p, rng);
    EXPECT_EQ(out.image, img);
    EXPECT_EQ(out.label, 3);
    EXPECT_EQ(out.augment, AugmentRecord{});
  }
}

TEST(Augment, FlipIsAnInvolution) {
  auto img = random_image(9, 14, 4);
  AugmentRecord flip;
  flip.flipped = true;
  auto once = apply_augment(img, flip);
  EXPECT_NE(once, img);
  EXPECT_EQ(once[0], img[13 * 3]);
  EXPECT_EQ(apply_augment(once, flip), img);
}

TEST(Augment, QuarterTurnMatchesHandRotatedGrid) {
  auto img = grid(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  AugmentRecord r;
  r.angle_deg = 90;
  // Counter-clockwise quarter turn, as displayed.
  auto expect = grid(3, 3, {3, 6, 9, 2, 5, 8, 1, 4, 7});
  EXPECT_EQ(apply_augment(img, r), expect);
  r.angle_deg = -90;
  EXPECT_EQ(apply_augment(img, r), grid(3, 3, {7, 4, 1, 8, 5, 2, 9, 6, 3}));
}

TEST(Augment, ShiftMovesContentAndFillsFromEdge) {
  auto img = grid(1, 4, {1, 2, 3, 4});
  AugmentRecord r;
  r.shift_x = 1;
  EXPECT_EQ(apply_augment(img, r), grid(1, 4, {1, 1, 2, 3}));
}

TEST(Augment, DrawsStayInRangeAndPreserveShape) {
  AugmentParams p;
  std::size_t flips = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng = Rng::keyed({11, 0, seed});
    Sample s{random_image(10, 12, seed), int(seed % 5), "", {}};
    auto out = augment_sample(s, p, rng);
    EXPECT_EQ(out.image.shape(), s.image.shape());
    EXPECT_EQ(out.label, s.label);
    EXPECT_LE(std::abs(out.augment.angle_deg), 15.0);
    EXPECT_LE(std::abs(out.augment.zoom - 1), 0.1);
    EXPECT_LE(std::abs(out.augment.shift_x), 1.2);
    EXPECT_LE(std::abs(out.augment.shift_y), 1.0);
    flips += out.augment.flipped;
    // Nearest-edge fill and bilinear weights keep values inside the source range.
    for (float v : out.image.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 255.0f);
    }
  }
  EXPECT_GT(flips, 60u);
  EXPECT_LT(flips, 140u);
}

TEST(Augment, KeyedStreamIsReproducible) {
  auto img = random_image(16, 16, 2);
  Rng a = Rng::keyed({5, 2, 17}), b = Rng::keyed({5, 2, 17}), c = Rng::keyed({5, 3, 17});
  Sample s{img, 0, "", {}};
  auto x = augment_sample(s, {}, a), y = augment_sample(s, {}, b), z = augment_sample(s, {}, c);
  EXPECT_EQ(x.image, y.image);
  EXPECT_EQ(x.augment, y.augment);
  EXPECT_NE(x.augment, z.augment);
}

TEST(Augment, ParamValidation) {
  EXPECT_NO_THROW(AugmentParams{}.validate());
  EXPECT_THROW((AugmentParams{-1, 0.1, 0.1, 0.5}.validate()), ConfigError);
  EXPECT_THROW((AugmentParams{15, 1.0, 0.1, 0.5}.validate()), ConfigError);
  EXPECT_THROW((AugmentParams{15, 0.1, 1.5, 0.5}.validate()), ConfigError);
  EXPECT_THROW((AugmentParams{15, 0.1, 0.1, 1.5}.validate()), ConfigError);
}

TEST(Preprocess, Endpoints) {
  Tensor<float> px({1, 3}, std::vector<float>{255, 0, 127.5f});
  preprocess(px, PreprocessMode::scale_pm1);
  EXPECT_EQ(px[0], 1.0f);
  EXPECT_EQ(px[1], -1.0f);
  EXPECT_EQ(px[2], 0.0f);

  // RGB pixel equal to the means (given in BGR order) maps to zero.
  Tensor<float> m({1, 3}, std::vector<float>{123.68f, 116.779f, 103.939f});
  preprocess(m, PreprocessMode::resnet_means);
  for (float v : m.data())
    EXPECT_EQ(v, 0.0f);

  Tensor<float> z({1, 3}, std::vector<float>{10, 20, 30});
  preprocess(z, PreprocessMode::resnet_means);
  EXPECT_FLOAT_EQ(z[0], 30 - 103.939f);
  EXPECT_FLOAT_EQ(z[2], 10 - 123.68f);
}

// 8-bit levels: 1e-6 * max(1, |x|). Arbitrary floats: 1e-6 in the output scale.
TEST(Preprocess, InverseRoundtrip) {
  auto close = [](float a, float b) { return std::abs(a - b) <= 1e-6 * std::max(1.0f, std::abs(b)); };
  Tensor<float> levels({256, 3});
  for (std::size_t i = 0; i < levels.size(); ++i)
    levels[i] = float(i / 3);
  auto t = levels;
  preprocess(t, PreprocessMode::scale_pm1);
  unpreprocess(t, PreprocessMode::scale_pm1);
  for (std::size_t i = 0; i < levels.size(); ++i)
    ASSERT_TRUE(close(t[i], levels[i])) << t[i] << " vs " << levels[i];
  for (auto mode : {PreprocessMode::scale_pm1, PreprocessMode::resnet_means}) {
    auto img = random_image(8, 8, 9);
    auto t = img;
    preprocess(t, mode);
    unpreprocess(t, mode);
    for (std::size_t i = 0; i < img.size(); ++i)
      if (mode == PreprocessMode::scale_pm1) // measured in the [-1, 1] scale
        ASSERT_LE(std::abs(t[i] - img[i]) / 127.5, 1e-6) << t[i] << " vs " << img[i];
      else // float storage of values near the means limits this to ~1e-5
        ASSERT_NEAR(t[i], img[i], 1e-4);
  }
  EXPECT_EQ(parse_preprocess_mode("scale_pm1"), PreprocessMode::scale_pm1);
  EXPECT_THROW(parse_preprocess_mode("caffe"), ConfigError);
}
