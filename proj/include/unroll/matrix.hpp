#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace unroll {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Sized for the small problems this
// library works with (d <= a few hundred); no attempt at blocking or BLAS.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
  }

  static Matrix identity(int d) {
    Matrix m(d, d);
    for (int i = 0; i < d; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diag(const Vector& entries) {
    Matrix m(static_cast<int>(entries.size()), static_cast<int>(entries.size()));
    for (size_t i = 0; i < entries.size(); ++i) m(static_cast<int>(i), static_cast<int>(i)) = entries[i];
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// ---- vector helpers ----

inline double dot(const Vector& a, const Vector& b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

inline Vector operator+(const Vector& a, const Vector& b) {
  assert(a.size() == b.size());
  Vector r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vector operator-(const Vector& a, const Vector& b) {
  assert(a.size() == b.size());
  Vector r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vector operator*(double s, const Vector& a) {
  Vector r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
  return r;
}

// y += s * x
inline void axpy(double s, const Vector& x, Vector& y) {
  assert(x.size() == y.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline bool all_finite(const Vector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) {
  for (size_t i = 0; i < m.size(); ++i)
    if (!std::isfinite(m.data()[i])) return false;
  return true;
}

// ---- matrix helpers ----

inline Vector matvec(const Matrix& a, const Vector& x) {
  assert(static_cast<int>(x.size()) == a.cols());
  Vector y(a.rows(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

// A^T x
inline Vector matvec_t(const Matrix& a, const Vector& x) {
  assert(static_cast<int>(x.size()) == a.rows());
  Vector y(a.cols(), 0.0);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) y[j] += a(i, j) * x[i];
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  assert(a.cols() == b.rows());
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  assert(a.same_shape(b));
  Matrix c(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
  return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  assert(a.same_shape(b));
  Matrix c(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
  return c;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix c(a.rows(), a.cols());
  for (size_t i = 0; i < a.size(); ++i) c.data()[i] = s * a.data()[i];
  return c;
}

// C += s * x y^T
inline void add_outer(double s, const Vector& x, const Vector& y, Matrix& c) {
  assert(c.rows() == static_cast<int>(x.size()) && c.cols() == static_cast<int>(y.size()));
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j) c(i, j) += s * x[i] * y[j];
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
  return std::sqrt(s);
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
  return m;
}

// Largest |a_ij - a_ji| scaled by 1 + max |a_ij|.
inline double relative_asymmetry(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("relative_asymmetry: matrix not square");
  double asym = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j) asym = std::max(asym, std::fabs(a(i, j) - a(j, i)));
  return asym / (1.0 + max_abs(a));
}

}  // namespace unroll
