#include "mrinet/batches.hpp"

#include <algorithm>
#include <numeric>

#include "mrinet/errors.hpp"
#include "mrinet/parallel.hpp"

namespace mrinet {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch,
                                     bool shuffle_order) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_order) {
    Rng rng = Rng::keyed({seed, epoch});
    shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

std::size_t batch_count(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0)
    throw ConfigError("batch_size must be at least 1");
  return (n + batch_size - 1) / batch_size;
}

ImageSource::ImageSource(DatasetIndex index, std::size_t height, std::size_t width, bool cache)
    : index_(std::move(index)), height_(height), width_(width), cache_(cache) {
  if (height_ == 0 || width_ == 0)
    throw ConfigError("image size must be positive");
  if (cache_) {
    images_.resize(index_.size());
    loaded_.assign(index_.size(), 0);
  }
}

Tensor<float> ImageSource::image(std::size_t i) {
  if (i >= index_.size())
    throw LookupError("sample " + std::to_string(i) + " is outside the index");
  if (cache_ && loaded_[i])
    return images_[i];
  auto img = decode_and_resize(index_.absolute(index_.records[i]), height_, width_);
  if (cache_) {
    images_[i] = img;
    loaded_[i] = 1;
  }
  return img;
}

Batch load_batch(ImageSource &source, const std::vector<std::size_t> &positions,
                 const BatchOptions &options, std::uint64_t epoch) {
  const std::size_t B = positions.size(), H = source.height(), W = source.width();
  const std::size_t per = H * W * 3;
  Batch batch;
  batch.images = Tensor<float>({B, H, W, 3});
  batch.labels.resize(B);
  batch.indices = positions;
  batch.augment.resize(B);
  parallel_for(B, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const std::size_t pos = positions[b];
      Tensor<float> img = source.image(pos);
      if (options.augment) {
        Rng rng = Rng::keyed({options.seed, epoch, pos});
        batch.augment[b] = draw_augment(options.augment_params, H, W, rng);
        img = apply_augment(img, batch.augment[b]);
      }
      std::copy(img.data().begin(), img.data().end(), batch.images.raw() + b * per);
      batch.labels[b] = source.index().records[pos].class_id;
    }
  });
  preprocess(batch.images, options.preprocessing);
  return batch;
}

BatchIterator::BatchIterator(ImageSource &source, BatchOptions options, std::uint64_t epoch)
    : source_(&source), options_(options), epoch_(epoch) {
  if (source.size() == 0)
    throw IterationError("cannot iterate over an empty index");
  count_ = mrinet::batch_count(source.size(), options_.batch_size);
  if (options_.augment)
    options_.augment_params.validate();
  order_ = epoch_order(source.size(), options_.seed, epoch_, options_.shuffle);
}

std::vector<std::size_t> BatchIterator::positions(std::size_t b) const {
  if (b >= count_)
    throw LookupError("batch " + std::to_string(b) + " is past the end of the epoch");
  const std::size_t begin = b * options_.batch_size;
  const std::size_t end = std::min(order_.size(), begin + options_.batch_size);
  return {order_.begin() + static_cast<std::ptrdiff_t>(begin),
          order_.begin() + static_cast<std::ptrdiff_t>(end)};
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= count_)
    return std::nullopt;
  return load_batch(*source_, positions(cursor_++), options_, epoch_);
}

} // namespace mrinet
