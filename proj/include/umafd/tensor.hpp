#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace umafd {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

/// Keeps freed tensor buffers inside the process instead of handing them back
/// to the kernel after every step. Call once at program start.
void retain_freed_memory();
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double* ptr() { return values_.data(); }
  const double* ptr() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  const std::vector<double>& vec() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Value of a single-element tensor.
  double item() const;

  /// Number of elements per leading-axis slice (product of axes 1..n).
  std::size_t row_size() const;

  void fill(double v);
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> values_;
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace umafd
