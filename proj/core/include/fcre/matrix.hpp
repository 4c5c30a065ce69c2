#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "fcre/errors.hpp"

namespace fcre {

// Dense row-major matrix of 64-bit floats. Row vectors (1 x n) double as the
// feature/bias vectors used throughout the library.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  // 1 x n row vector from a list of entries.
  static Matrix row(std::initializer_list<double> values);
  static Matrix row(const std::vector<double>& values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  // Flat access in row-major order.
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }
  double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
  const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }
  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  Matrix row_copy(std::size_t r) const;
  void set_row(std::size_t r, const Matrix& v);
  void add_row(std::size_t r, const Matrix& v, double scale = 1.0);

  void fill(double value) { data_.assign(data_.size(), value); }

  // Throws NumericError if any entry is NaN or infinite.
  void check_finite(const char* what) const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix& operator+=(Matrix& a, const Matrix& b);

// a += s * b, in place.
void axpy(Matrix& a, double s, const Matrix& b);

// Inner product of two equally sized matrices viewed as flat vectors.
double dot(const Matrix& a, const Matrix& b);
double norm(const Matrix& a);

// Unit-norm copy; throws DegenerateInputError when the norm is zero.
Matrix normalized(const Matrix& a);

// Stable softmax of a row vector (max subtraction); entries positive and
// summing to one. Throws ShapeError on an empty input.
Matrix softmax_row(const Matrix& x);
// log(sum_i exp(x_i)) with max subtraction.
double log_sum_exp(std::span<const double> x);

// Cosine similarity clamped to [-1, 1]; throws DegenerateInputError when
// either vector has zero norm.
double cosine(const Matrix& u, const Matrix& v);

// d cos(u, v) / du and / dv, written into du/dv (accumulated with `scale`).
void cosine_backward(const Matrix& u, const Matrix& v, double scale, Matrix& du, Matrix& dv);

}  // namespace fcre
