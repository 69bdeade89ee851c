#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mrinet {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape &shape);
std::string to_string(const Shape &shape);

// Dense row-major tensor. Activations use NHWC; conv weights use
// [kh, kw, Cin, Cout]. A default-constructed tensor is empty (no shape, no
// data) and only serves as a placeholder.
template <typename T> class Tensor {
public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T{0}); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T{1}); }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T *raw() noexcept { return data_.data(); }
  const T *raw() const noexcept { return data_.data(); }

  T &operator[](std::size_t i) noexcept { return data_[i]; }
  const T &operator[](std::size_t i) const noexcept { return data_[i]; }

  // NHWC element access.
  T &at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) noexcept {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }
  const T &at(std::size_t n, std::size_t h, std::size_t w,
              std::size_t c) const noexcept {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
  }
  T &at(std::size_t i, std::size_t j) noexcept {
    return data_[i * shape_[1] + j];
  }
  const T &at(std::size_t i, std::size_t j) const noexcept {
    return data_[i * shape_[1] + j];
  }

  Tensor reshaped(Shape shape) const;
  void fill(T value);

  template <typename U> Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor &other) const = default;

private:
  Shape shape_;
  std::vector<T> data_;
};

// Throws DimensionError naming `what` unless `t` has exactly `rank` axes.
template <typename T>
void require_rank(const Tensor<T> &t, std::size_t rank, const std::string &what);

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace mrinet
