#include "umafd/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "umafd/errors.hpp"

namespace umafd {

void retain_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data of size " + std::to_string(values_.size()) + " does not fit shape " +
                     shape_str(shape_));
  }
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return values_[0];
}

std::size_t Tensor::row_size() const {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return values_.size() / shape_[0];
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), values_);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

}  // namespace umafd
