#pragma once

// Dense row-major tensor plus the handful of kernels the trainer needs.
// No views, no strides, no broadcasting: shapes must match exactly, and the
// few row-vector helpers the MLP needs are spelled out by name.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "mtlopt/errors.hpp"
#include "mtlopt/rng.hpp"

namespace mtlopt {

using Shape = std::vector<std::size_t>;

// Rank-0 means "absent" throughout this codebase, so its element count is 0.
inline std::size_t numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(numel(shape_), 0.0) {}
  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
      throw DimensionError("tensor: data length does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? (shape_.empty() ? 0 : 1) : shape_[1]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

inline void require_matrix(const Tensor& t, const char* what) {
  if (t.shape().size() != 2)
    throw DimensionError(std::string(what) + ": expected a 2-d tensor, got " + shape_str(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matrix products

// C[m x n] = A[m x k] * B[k x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner dimensions " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const std::size_t n = b.shape()[1];
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C[k x n] = A^T[k x m] * B[m x n]   (A given as [m x k])
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul_tn");
  detail::require_matrix(b, "matmul_tn");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  if (b.shape()[0] != m)
    throw DimensionError("matmul_tn: inner dimensions " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const std::size_t n = b.shape()[1];
  Tensor c({k, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    const double* brow = pb + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* crow = pc + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

// C[m x n] = A[m x k] * B^T[k x n]   (B given as [n x k])
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul_nt");
  detail::require_matrix(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  if (b.shape()[1] != k)
    throw DimensionError("matmul_nt: inner dimensions " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const std::size_t n = b.shape()[0];
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
  return c;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
  return c;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i] == 0.0) throw NumericError("div: zero divisor");
    c[i] = a[i] / b[i];
  }
  return c;
}

inline Tensor square(const Tensor& a) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * a[i];
  return c;
}

inline Tensor sqrt(const Tensor& a) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0.0) throw NumericError("sqrt: negative entry");
    c[i] = std::sqrt(a[i]);
  }
  return c;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * s;
  return c;
}

// ELU(x) = x for x >= 0, alpha*(e^x - 1) otherwise.
inline double elu_scalar(double x, double alpha = 1.0) {
  return x >= 0.0 ? x : alpha * std::expm1(x);
}

// Derivative; at x == 0 defined as 1 (the right-hand limit).
inline double elu_grad_scalar(double x, double alpha = 1.0) {
  return x >= 0.0 ? 1.0 : alpha * std::exp(x);
}

inline Tensor elu(const Tensor& a, double alpha = 1.0) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = elu_scalar(a[i], alpha);
  return c;
}

inline Tensor elu_grad(const Tensor& a, double alpha = 1.0) {
  Tensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = elu_grad_scalar(a[i], alpha);
  return c;
}

// ---------------------------------------------------------------------------
// in-place helpers for the hot loops

inline void add_inplace(Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// y += alpha * x
inline void axpy(Tensor& y, double alpha, const Tensor& x) {
  detail::require_same_shape(y, x, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

// matrix[r, c] += v[c] for every row r
inline void add_rowvec_inplace(Tensor& m, const Tensor& v) {
  detail::require_matrix(m, "add_rowvec");
  if (v.size() != m.shape()[1])
    throw DimensionError("add_rowvec: vector length " + std::to_string(v.size()) +
                         " vs columns " + std::to_string(m.shape()[1]));
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += v[c];
  }
}

// column sums of a matrix, as a 1-d tensor
inline Tensor colsum(const Tensor& m) {
  detail::require_matrix(m, "colsum");
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  Tensor out({cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions and checks

inline double sum(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return s;
}

inline double dot(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
  return s;
}

inline double norm(const Tensor& a) { return std::sqrt(squared_norm(a)); }

inline bool all_finite(const Tensor& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

// i.i.d. gaussian entries drawn in flat index order.
inline Tensor gaussian_tensor(Rng& rng, double mean, double stddev, Shape shape) {
  if (stddev < 0.0) throw ParameterError("gaussian_tensor: stddev must be >= 0");
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.gaussian(mean, stddev);
  return t;
}

}  // namespace mtlopt
