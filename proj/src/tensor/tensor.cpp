#include "mrinet/tensor.hpp"

#include <algorithm>

#include "mrinet/errors.hpp"

namespace mrinet {

std::size_t element_count(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape)
    n *= d;
  return n;
}

std::string to_string(const Shape &shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i)
      s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace {
void check_positive(const Shape &shape) {
  if (shape.empty())
    throw DimensionError("rank", "tensor shape must have at least one axis");
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i] == 0)
      throw DimensionError("axis " + std::to_string(i),
                           "zero-sized axis in shape " + to_string(shape));
}
} // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_positive(shape_);
  data_.assign(element_count(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_positive(shape_);
  if (data_.size() != element_count(shape_))
    throw DimensionError("data", "buffer of " + std::to_string(data_.size()) +
                                     " elements does not match shape " +
                                     to_string(shape_));
}

template <typename T> std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("axis " + std::to_string(axis),
                         "tensor of rank " + std::to_string(shape_.size()));
  return shape_[axis];
}

template <typename T> Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (element_count(shape) != data_.size())
    throw DimensionError("reshape", "cannot view " + to_string(shape_) +
                                        " as " + to_string(shape));
  return Tensor(std::move(shape), data_);
}

template <typename T> void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
void require_rank(const Tensor<T> &t, std::size_t rank,
                  const std::string &what) {
  if (t.rank() != rank)
    throw DimensionError("rank", what + " must have rank " +
                                     std::to_string(rank) + ", got shape " +
                                     to_string(t.shape()));
}

template class Tensor<float>;
template class Tensor<double>;
template void require_rank(const Tensor<float> &, std::size_t,
                           const std::string &);
template void require_rank(const Tensor<double> &, std::size_t,
                           const std::string &);

} // namespace mrinet
