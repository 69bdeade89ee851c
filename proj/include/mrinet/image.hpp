#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "mrinet/rng.hpp"
#include "mrinet/tensor.hpp"

namespace mrinet {

// Images are (H, W, 3) float tensors holding RGB values.

// Decodes an 8-bit PNG or JPEG to RGB in [0, 255]; grayscale is replicated to
// three channels. DecodeError names the path.
Tensor<float> decode_image(const std::filesystem::path &path);
// Same, from in-memory bytes.
Tensor<float> decode_image_bytes(std::string_view bytes, const std::string &origin);

// Bilinear resize with the aligned-corners-false mapping
// src = (dst + 0.5) * in / out - 0.5, clamped to the edge. Same-size input is
// returned unchanged.
Tensor<float> resize_bilinear(const Tensor<float> &image, std::size_t height, std::size_t width);

Tensor<float> decode_and_resize(const std::filesystem::path &path, std::size_t height,
                                std::size_t width);

// PNG encoding of an RGB image; values are rounded and clamped to [0, 255].
std::string encode_png(const Tensor<float> &image);

struct AugmentParams {
  double rotation_max_deg = 15.0;
  double shift_max_frac = 0.10;
  double zoom_max_frac = 0.10;
  double hflip_prob = 0.5;

  // ConfigError unless all magnitudes are >= 0, fractions < 1 and the flip
  // probability lies in [0, 1].
  void validate() const;
  bool operator==(const AugmentParams &) const = default;
};

// Concrete draws applied to one image.
struct AugmentRecord {
  bool flipped = false;
  double angle_deg = 0.0; // counter-clockwise as displayed
  double zoom = 1.0;      // > 1 enlarges the content
  double shift_x = 0.0;   // pixels, positive moves content right
  double shift_y = 0.0;   // pixels, positive moves content down

  bool operator==(const AugmentRecord &) const = default;
};

// Draws flip, angle, zoom, shift_x, shift_y in that order. Every draw is
// consumed even at zero magnitude, so streams stay aligned across settings.
AugmentRecord draw_augment(const AugmentParams &params, std::size_t height, std::size_t width,
                           Rng &rng);

// Applies hflip, rotation, zoom and shift about the image centre by inverse
// mapping with bilinear sampling; out-of-bounds reads take the nearest edge
// pixel.
Tensor<float> apply_augment(const Tensor<float> &image, const AugmentRecord &record);

struct Sample {
  Tensor<float> image;
  int label = 0;
  std::string source;
  AugmentRecord augment;
};

// Rng should be keyed by (seed, epoch, sample_index).
Sample augment_sample(const Sample &sample, const AugmentParams &params, Rng &rng);

enum class PreprocessMode { resnet_means, scale_pm1 };

std::string_view to_string(PreprocessMode mode);
PreprocessMode parse_preprocess_mode(std::string_view name);

// resnet_means: RGB to BGR, then subtract (103.939, 116.779, 123.68).
// scale_pm1: x / 127.5 - 1.
// Works on any tensor whose last axis has 3 channels.
void preprocess(Tensor<float> &images, PreprocessMode mode);
void unpreprocess(Tensor<float> &images, PreprocessMode mode);

} // namespace mrinet
