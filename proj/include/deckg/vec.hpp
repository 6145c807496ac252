#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "deckg/core.hpp"

namespace deckg {

using Vec = std::vector<double>;

// Dense row-major matrix; small enough here that anything heavier than a
// flat vector would be noise.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  // d x k matrix with ones on the leading diagonal, zero elsewhere.
  static Mat truncated_identity(std::size_t r, std::size_t c) {
    Mat m(r, c);
    const std::size_t n = r < c ? r : c;
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline double norm(std::span<const double> a) { return std::sqrt(squared_norm(a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// out = W^T x  (W rows x cols, x of size rows, out of size cols)
inline void matvec_transposed(const Mat& w, std::span<const double> x, std::span<double> out) {
  for (std::size_t j = 0; j < w.cols; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w.a.data() + i * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) out[j] += xi * row[j];
  }
}

// out = W x  (x of size cols, out of size rows)
inline void matvec(const Mat& w, std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* row = w.a.data() + i * w.cols;
    double s = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) s += row[j] * x[j];
    out[i] = s;
  }
}

// W += alpha * u v^T
inline void outer_acc(Mat& w, double alpha, std::span<const double> u, std::span<const double> v) {
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double c = alpha * u[i];
    if (c == 0.0) continue;
    double* row = w.a.data() + i * w.cols;
    for (std::size_t j = 0; j < w.cols; ++j) row[j] += c * v[j];
  }
}

inline double logistic(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation act, double x) {
  return act == Activation::logistic ? logistic(x) : x;
}

// Derivative expressed through the activation output.
inline double activate_grad_from_output(Activation act, double y) {
  return act == Activation::logistic ? y * (1.0 - y) : 1.0;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace deckg
