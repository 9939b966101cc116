#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gnnr {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape shape);

/// Dense row-major matrix of doubles. Vectors are 1 x n rows; scalars 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Throws ShapeError if data.size() != rows * cols.
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor row_vector(std::vector<double> values);
  static Tensor scalar(double value) { return Tensor(1, 1, value); }

  Shape shape() const noexcept { return {rows_, cols_}; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  /// Value of a 1 x 1 tensor; throws ShapeError otherwise.
  double item() const;

  void fill(double value);
  Tensor& operator+=(const Tensor& other);

  bool all_finite() const noexcept;

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Throws ShapeError("<op>: shape mismatch (a) vs (b)") when a != b.
void require_same_shape(const char* op, Shape a, Shape b);

double max_abs_difference(const Tensor& a, const Tensor& b);

}  // namespace gnnr
