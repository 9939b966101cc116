#include "gnnr/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "gnnr/errors.hpp"

namespace gnnr {

std::string to_string(Shape shape) {
  return std::to_string(shape.rows) + "x" + std::to_string(shape.cols);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("tensor: data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string({rows, cols}));
  }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("tensor: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor Tensor::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(1, n, std::move(values));
}

double Tensor::item() const {
  if (rows_ != 1 || cols_ != 1) {
    throw ShapeError("item: expected 1x1 tensor, got " + to_string(shape()));
  }
  return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape("add", shape(), other.shape());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const char* op, Shape a, Shape b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + to_string(a) + ") vs (" +
                     to_string(b) + ")");
  }
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
  require_same_shape("max_abs_difference", a.shape(), b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace gnnr
