// SPDX-License-Identifier: Apache-2.0
#include "mgt/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mgt/error.hpp"

namespace mgt {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool Tensor::has_nan() const {
  return std::any_of(data_.begin(), data_.end(), [](double v) { return std::isnan(v); });
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  // i-k-j order: each c[r][s] still accumulates its terms in increasing k.
  for (std::size_t r = 0; r < m; ++r) {
    double* out = c.data() + r * n;
    const double* arow = a.data() + r * k;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      const double* brow = b.data() + t * n;
      for (std::size_t s = 0; s < n; ++s) out[s] += av * brow[s];
    }
  }
  return c;
}

Tensor masked_row_softmax(const Tensor& scores) {
  if (scores.rank() != 2) {
    throw DimensionError("masked_row_softmax expects a matrix, got " + shape_string(scores.shape()));
  }
  if (scores.has_nan()) throw NumericError("masked_row_softmax: NaN in scores");
  Tensor out(scores.shape());
  const std::size_t n = scores.cols();
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto in = scores.row(r);
    auto y = out.row(r);
    double mx = kNegInf;
    for (double v : in) mx = std::max(mx, v);
    if (mx == kNegInf) continue;  // fully blocked row stays zero
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = in[j] == kNegInf ? 0.0 : std::exp(in[j] - mx);
      sum += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("shape mismatch: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace mgt
