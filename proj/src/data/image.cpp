#include "mrinet/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "mrinet/atomic_file.hpp"
#include "mrinet/errors.hpp"

namespace mrinet {

namespace {

void require_rgb(const Tensor<float> &image, const char *what) {
  if (image.rank() != 3 || image.dim(2) != 3 || image.dim(0) == 0 || image.dim(1) == 0)
    throw DimensionError("image", std::string(what) + " expects an (H, W, 3) image");
}

float pixel(const Tensor<float> &img, std::size_t y, std::size_t x, std::size_t c) {
  return img[(y * img.dim(1) + x) * 3 + c];
}

// Bilinear read at fractional (y, x), coordinates clamped to the image.
float sample_clamped(const Tensor<float> &img, double y, double x, std::size_t c) {
  const double H = double(img.dim(0)), W = double(img.dim(1));
  y = std::clamp(y, 0.0, H - 1);
  x = std::clamp(x, 0.0, W - 1);
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, img.dim(0) - 1);
  const std::size_t x1 = std::min(x0 + 1, img.dim(1) - 1);
  const double fy = y - double(y0), fx = x - double(x0);
  const double top = (1 - fx) * pixel(img, y0, x0, c) + fx * pixel(img, y0, x1, c);
  const double bottom = (1 - fx) * pixel(img, y1, x0, c) + fx * pixel(img, y1, x1, c);
  return static_cast<float>((1 - fy) * top + fy * bottom);
}

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

} // namespace

Tensor<float> decode_image_bytes(std::string_view bytes, const std::string &origin) {
  if (bytes.empty())
    throw DecodeError(origin + ": empty file");
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<char *>(bytes.data()));
  cv::Mat bgr;
  try {
    bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  } catch (const cv::Exception &e) {
    throw DecodeError(origin + ": " + e.what());
  }
  if (bgr.empty() || bgr.type() != CV_8UC3)
    throw DecodeError(origin + ": not a decodable PNG or JPEG image");
  const auto h = static_cast<std::size_t>(bgr.rows), w = static_cast<std::size_t>(bgr.cols);
  Tensor<float> out({h, w, 3});
  for (std::size_t y = 0; y < h; ++y) {
    const auto *row = bgr.ptr<unsigned char>(static_cast<int>(y));
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out[(y * w + x) * 3 + c] = row[x * 3 + (2 - c)];
  }
  return out;
}

Tensor<float> decode_image(const std::filesystem::path &path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const IoError &e) {
    throw DecodeError(path.string() + ": " + e.what());
  }
  return decode_image_bytes(bytes, path.string());
}

Tensor<float> resize_bilinear(const Tensor<float> &image, std::size_t height, std::size_t width) {
  require_rgb(image, "resize_bilinear");
  if (height == 0 || width == 0)
    throw DimensionError("size", "resize target must be non-empty");
  const std::size_t H = image.dim(0), W = image.dim(1);
  if (H == height && W == width)
    return image;
  Tensor<float> out({height, width, 3});
  const double sy = double(H) / double(height), sx = double(W) / double(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (double(y) + 0.5) * sy - 0.5);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (double(x) + 0.5) * sx - 0.5);
      for (std::size_t c = 0; c < 3; ++c)
        out[(y * width + x) * 3 + c] = sample_clamped(image, fy, fx, c);
    }
  }
  return out;
}

Tensor<float> decode_and_resize(const std::filesystem::path &path, std::size_t height,
                                std::size_t width) {
  return resize_bilinear(decode_image(path), height, width);
}

std::string encode_png(const Tensor<float> &image) {
  require_rgb(image, "encode_png");
  const auto h = static_cast<int>(image.dim(0)), w = static_cast<int>(image.dim(1));
  cv::Mat bgr(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto *row = bgr.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = image[(std::size_t(y) * std::size_t(w) + std::size_t(x)) * 3 +
                              std::size_t(2 - c)];
        row[x * 3 + c] = static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
      }
  }
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", bgr, buf))
    throw IoError("PNG encoding failed");
  return std::string(buf.begin(), buf.end());
}

void AugmentParams::validate() const {
  auto bad = [](const std::string &m) { throw ConfigError("augment: " + m); };
  if (!(rotation_max_deg >= 0) || !std::isfinite(rotation_max_deg))
    bad("rotation_max_deg must be >= 0");
  if (!(shift_max_frac >= 0 && shift_max_frac < 1))
    bad("shift_max_frac must lie in [0, 1)");
  if (!(zoom_max_frac >= 0 && zoom_max_frac < 1))
    bad("zoom_max_frac must lie in [0, 1)");
  if (!(hflip_prob >= 0 && hflip_prob <= 1))
    bad("hflip_prob must lie in [0, 1]");
}

AugmentRecord draw_augment(const AugmentParams &p, std::size_t height, std::size_t width,
                           Rng &rng) {
  AugmentRecord r;
  r.flipped = rng.bernoulli(p.hflip_prob);
  r.angle_deg = rng.uniform(-p.rotation_max_deg, p.rotation_max_deg);
  r.zoom = rng.uniform(1 - p.zoom_max_frac, 1 + p.zoom_max_frac);
  r.shift_x = rng.uniform(-p.shift_max_frac, p.shift_max_frac) * double(width);
  r.shift_y = rng.uniform(-p.shift_max_frac, p.shift_max_frac) * double(height);
  return r;
}

Tensor<float> apply_augment(const Tensor<float> &image, const AugmentRecord &r) {
  require_rgb(image, "apply_augment");
  if (!(r.zoom > 0))
    throw ConfigError("augment: zoom must be positive");
  if (r == AugmentRecord{})
    return image;
  const std::size_t H = image.dim(0), W = image.dim(1);
  const double cy = (double(H) - 1) / 2, cx = (double(W) - 1) / 2;
  const double theta = r.angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  Tensor<float> out({H, W, 3});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      // Undo shift, zoom, rotation and flip in reverse order.
      const double u = (double(x) - cx - r.shift_x) / r.zoom;
      const double v = (double(y) - cy - r.shift_y) / r.zoom;
      double sx = u * cs - v * sn;
      const double sy = u * sn + v * cs;
      if (r.flipped)
        sx = -sx;
      const double px = snap(sx + cx), py = snap(sy + cy);
      for (std::size_t c = 0; c < 3; ++c)
        out[(y * W + x) * 3 + c] = sample_clamped(image, py, px, c);
    }
  return out;
}

Sample augment_sample(const Sample &sample, const AugmentParams &params, Rng &rng) {
  require_rgb(sample.image, "augment_sample");
  Sample out = sample;
  out.augment = draw_augment(params, sample.image.dim(0), sample.image.dim(1), rng);
  out.image = apply_augment(sample.image, out.augment);
  return out;
}

std::string_view to_string(PreprocessMode mode) {
  return mode == PreprocessMode::resnet_means ? "resnet_means" : "scale_pm1";
}

PreprocessMode parse_preprocess_mode(std::string_view name) {
  if (name == "resnet_means")
    return PreprocessMode::resnet_means;
  if (name == "scale_pm1")
    return PreprocessMode::scale_pm1;
  throw ConfigError("unknown preprocessing mode '" + std::string(name) +
                    "' (expected resnet_means or scale_pm1)");
}

namespace {
constexpr float bgr_means[3] = {103.939f, 116.779f, 123.68f};

void require_channels(const Tensor<float> &t) {
  if (t.rank() == 0 || t.dim(t.rank() - 1) != 3)
    throw DimensionError("channels", "preprocessing expects 3 channels in the last axis");
}
} // namespace

void preprocess(Tensor<float> &images, PreprocessMode mode) {
  require_channels(images);
  auto d = images.data();
  for (std::size_t i = 0; i < d.size(); i += 3) {
    if (mode == PreprocessMode::scale_pm1) {
      for (std::size_t c = 0; c < 3; ++c)
        d[i + c] = static_cast<float>(double(d[i + c]) / 127.5 - 1.0);
    } else {
      std::swap(d[i], d[i + 2]);
      for (std::size_t c = 0; c < 3; ++c)
        d[i + c] -= bgr_means[c];
    }
  }
}

void unpreprocess(Tensor<float> &images, PreprocessMode mode) {
  require_channels(images);
  auto d = images.data();
  for (std::size_t i = 0; i < d.size(); i += 3) {
    if (mode == PreprocessMode::scale_pm1) {
      for (std::size_t c = 0; c < 3; ++c)
        d[i + c] = static_cast<float>((double(d[i + c]) + 1.0) * 127.5);
    } else {
      for (std::size_t c = 0; c < 3; ++c)
        d[i + c] += bgr_means[c];
      std::swap(d[i], d[i + 2]);
    }
  }
}

} // namespace mrinet
