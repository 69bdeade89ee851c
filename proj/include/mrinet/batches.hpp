#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mrinet/dataset.hpp"
#include "mrinet/image.hpp"

namespace mrinet {

struct BatchOptions {
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool augment = false;
  AugmentParams augment_params;
  PreprocessMode preprocessing = PreprocessMode::resnet_means;
};

// Sample order for one epoch: a permutation keyed by (seed, epoch), or the
// identity when shuffling is off.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch,
                                     bool shuffle = true);
// ceil(n / batch_size).
std::size_t batch_count(std::size_t n, std::size_t batch_size);

// Decodes and resizes index records on demand, optionally keeping the
// resized images in memory.
class ImageSource {
public:
  ImageSource(DatasetIndex index, std::size_t height, std::size_t width, bool cache = true);

  const DatasetIndex &index() const noexcept { return index_; }
  std::size_t size() const noexcept { return index_.size(); }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  // Resized RGB image in [0, 255]. Safe to call concurrently for distinct i.
  Tensor<float> image(std::size_t i);

private:
  DatasetIndex index_;
  std::size_t height_, width_;
  bool cache_;
  std::vector<Tensor<float>> images_;
  std::vector<char> loaded_;
};

struct Batch {
  Tensor<float> images; // [B, H, W, 3], preprocessed
  std::vector<int> labels;
  std::vector<std::size_t> indices; // positions in the index
  std::vector<AugmentRecord> augment;
};

// Builds a batch from the given index positions. With augmentation on, each
// sample uses Rng::keyed({seed, epoch, position}), so results do not depend
// on batch composition or worker scheduling.
Batch load_batch(ImageSource &source, const std::vector<std::size_t> &positions,
                 const BatchOptions &options, std::uint64_t epoch);

// One epoch of batches in shuffled order; the last batch may be partial.
class BatchIterator {
public:
  // IterationError for an empty index, ConfigError for batch_size 0.
  BatchIterator(ImageSource &source, BatchOptions options, std::uint64_t epoch);

  std::size_t batch_count() const noexcept { return count_; }
  const std::vector<std::size_t> &order() const noexcept { return order_; }
  // Index positions of batch b.
  std::vector<std::size_t> positions(std::size_t b) const;
  std::optional<Batch> next();

private:
  ImageSource *source_;
  BatchOptions options_;
  std::uint64_t epoch_;
  std::vector<std::size_t> order_;
  std::size_t count_ = 0, cursor_ = 0;
};

} // namespace mrinet
