#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "edgefall/errors.hpp"

namespace edgefall {

// Dense vector of doubles.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

// Dense row-major matrix of doubles. Always at least 1x1.
class Matrix {
 public:
  Matrix() : Matrix(1, 1) {}

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
      throw ShapeError("matrix dimensions must be positive, got " +
                       shape_string(rows, cols));
    }
    data_.assign(rows * cols, fill);
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows)
      : Matrix(rows.size(), rows.size() == 0 ? 0 : rows.begin()->size()) {
    std::size_t r = 0;
    for (const auto& row : rows) {
      if (row.size() != cols_) {
        throw ShapeError("ragged matrix literal");
      }
      std::copy(row.begin(), row.end(), data_.begin() + r * cols_);
      ++r;
    }
  }

  static Matrix from_values(std::size_t rows, std::size_t cols,
                            std::vector<double> values) {
    Matrix m(rows, cols);
    if (values.size() != rows * cols) {
      throw ShapeError("expected " + std::to_string(rows * cols) +
                       " values for " + shape_string(rows, cols) + ", got " +
                       std::to_string(values.size()));
    }
    m.data_ = std::move(values);
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape() const { return shape_string(rows_, cols_); }

  static std::string shape_string(std::size_t rows, std::size_t cols) {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
  std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + a.shape() + " x " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

// out += a * x
inline void matvec_accumulate(const Matrix& a, std::span<const double> x,
                              std::span<double> out) {
  if (a.cols() != x.size() || a.rows() != out.size()) {
    throw ShapeError("matvec shape mismatch: " + a.shape() + " x (" +
                     std::to_string(x.size()) + ") -> (" +
                     std::to_string(out.size()) + ")");
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    double acc = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) acc += r[k] * x[k];
    out[i] += acc;
  }
}

inline Vector matvec(const Matrix& a, const Vector& x) {
  Vector out(a.rows());
  matvec_accumulate(a, x.values(), out.values());
  return out;
}

// out += a^T * x
inline void matvec_transposed_accumulate(const Matrix& a,
                                         std::span<const double> x,
                                         std::span<double> out) {
  if (a.rows() != x.size() || a.cols() != out.size()) {
    throw ShapeError("transposed matvec shape mismatch: " + a.shape() +
                     "^T x (" + std::to_string(x.size()) + ")");
  }
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto r = a.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) out[k] += r[k] * xi;
  }
}

// m += u v^T
inline void add_outer(Matrix& m, std::span<const double> u,
                      std::span<const double> v) {
  if (m.rows() != u.size() || m.cols() != v.size()) {
    throw ShapeError("outer product shape mismatch for " + m.shape());
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double ui = u[i];
    if (ui == 0.0) continue;
    auto r = m.row(i);
    for (std::size_t k = 0; k < v.size(); ++k) r[k] += ui * v[k];
  }
}

// Branches on sign so exp never overflows. The result is clamped to the open
// interval (0, 1): below DBL_MIN and above 1 - 2^-53 the true value is not
// representable anyway.
inline double sigmoid(double x) noexcept {
  constexpr double kLo = std::numeric_limits<double>::min();
  constexpr double kHi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, kLo, kHi);
}

inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }

namespace detail {
template <class Fn>
Vector map(const Vector& x, Fn fn) {
  Vector out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), fn);
  return out;
}
}  // namespace detail

inline Vector sigmoid(const Vector& x) {
  return detail::map(x, [](double v) { return sigmoid(v); });
}

inline Vector tanh_vec(const Vector& x) {
  return detail::map(x, [](double v) { return std::tanh(v); });
}

inline Vector relu(const Vector& x) {
  return detail::map(x, [](double v) { return relu(v); });
}

}  // namespace edgefall
