#include "fcre/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fcre {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Matrix Matrix::row(std::initializer_list<double> values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

Matrix Matrix::row(const std::vector<double>& values) {
  Matrix m(1, values.size());
  std::copy(values.begin(), values.end(), m.data_.begin());
  return m;
}

Matrix Matrix::row_copy(std::size_t r) const {
  Matrix out(1, cols_);
  for (std::size_t c = 0; c < cols_; ++c) out[c] = (*this)(r, c);
  return out;
}

void Matrix::set_row(std::size_t r, const Matrix& v) {
  if (v.size() != cols_) throw ShapeError("set_row: length mismatch");
  for (std::size_t c = 0; c < cols_; ++c) (*this)(r, c) = v[c];
}

void Matrix::add_row(std::size_t r, const Matrix& v, double scale) {
  if (v.size() != cols_) throw ShapeError("add_row: length mismatch");
  for (std::size_t c = 0; c < cols_; ++c) (*this)(r, c) += scale * v[c];
}

void Matrix::check_finite(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite entry");
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator+");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator-");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

Matrix& operator+=(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator+=");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

void axpy(Matrix& a, double s, const Matrix& b) {
  require_same_shape(a, b, "axpy");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += s * b[i];
}

double dot(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const Matrix& a) { return std::sqrt(dot(a, a)); }

Matrix normalized(const Matrix& a) {
  const double n = norm(a);
  if (n == 0.0) throw DegenerateInputError("normalized: zero-norm vector");
  return (1.0 / n) * a;
}

Matrix softmax_row(const Matrix& x) {
  if (x.empty()) throw ShapeError("softmax_row: empty input");
  const double mx = *std::max_element(x.data().begin(), x.data().end());
  Matrix out(x.rows(), x.cols());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= sum;
  return out;
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw ShapeError("log_sum_exp: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

double cosine(const Matrix& u, const Matrix& v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw DegenerateInputError("cosine: zero-norm input");
  const double c = dot(u, v) / (nu * nv);
  return std::clamp(c, -1.0, 1.0);
}

void cosine_backward(const Matrix& u, const Matrix& v, double scale, Matrix& du, Matrix& dv) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw DegenerateInputError("cosine_backward: zero-norm input");
  const double d = dot(u, v);
  const double inv = 1.0 / (nu * nv);
  const double c = d * inv;
  // d cos / du = v/(|u||v|) - cos * u/|u|^2
  for (std::size_t i = 0; i < u.size(); ++i) {
    du[i] += scale * (v[i] * inv - c * u[i] / (nu * nu));
    dv[i] += scale * (u[i] * inv - c * v[i] / (nv * nv));
  }
}

}  // namespace fcre
