// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mgt {

using Shape = std::vector<std::size_t>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Every dimension is positive, so a Tensor always holds at least one value.
/// Parameter and activation tensors are finite; only mask tensors carry -inf.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  // Matrix views. Valid for rank-2 tensors.
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return shape_[1]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator()(std::size_t a, std::size_t b, std::size_t c) {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t c) const {
    return data_[(a * shape_[1] + b) * shape_[2] + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  void fill(double v);
  /// Reinterprets the payload under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;
  bool has_nan() const;
  double max_abs() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Plain (non-differentiable) matrix product. Throws DimensionError naming
/// both shapes when the inner dimensions disagree.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Row-wise softmax that treats -inf as a hard block. Blocked entries come out
/// exactly 0; a row with no finite entry comes out all zero. NaN input throws
/// NumericError.
Tensor masked_row_softmax(const Tensor& scores);

/// Largest elementwise |a - b|; shapes must agree.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mgt
