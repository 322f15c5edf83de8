#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rpfgsm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles.
///
/// A default-constructed tensor is the scalar 0 (empty shape, one value).
class Tensor {
 public:
  Tensor() : values_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) {
      throw ShapeError("tensor of shape " + shape_string(shape_) + " needs " +
                       std::to_string(shape_size(shape_)) + " values, got " +
                       std::to_string(values_.size()));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  const double& operator[](std::size_t i) const { return values_[i]; }

  double item() const {
    if (values_.size() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    }
    return values_[0];
  }

  /// Same values under a new shape of equal size.
  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), values_);
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace rpfgsm
