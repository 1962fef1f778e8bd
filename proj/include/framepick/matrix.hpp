#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace framepick {

/// Dense row-major matrix of doubles. All kernels in this header use a
/// fixed left-to-right summation order so results are bit-reproducible.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> d)
      : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols)
      throw std::invalid_argument("Matrix: data length != rows*cols");
  }

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  const double* row_ptr(std::size_t r) const { return data.data() + r * cols; }
  double* row_ptr(std::size_t r) { return data.data() + r * cols; }

  std::vector<double> row(std::size_t r) const {
    return std::vector<double>(row_ptr(r), row_ptr(r) + cols);
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  bool operator==(const Matrix& o) const = default;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.cols; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k)
        acc += a.at(i, k) * b.at(k, j);
      out.at(i, j) = acc;
    }
  }
  return out;
}

/// Row-wise softmax with per-row max subtraction.
inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      double e = std::exp(m.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < m.cols; ++j) out.at(i, j) /= sum;
  }
  return out;
}

/// Zero-mean unit-variance normalization followed by elementwise affine.
inline std::vector<double> layer_norm(const std::vector<double>& v,
                                      const std::vector<double>& gain,
                                      const std::vector<double>& bias,
                                      double eps) {
  if (v.size() != gain.size() || v.size() != bias.size())
    throw std::invalid_argument("layer_norm: length mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be > 0");
  const std::size_t n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = (v[i] - mean) * inv * gain[i] + bias[i];
  return out;
}

/// Exact (erf-based) GELU and its derivative.
inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

inline double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * phi;
}

inline double dot(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw std::invalid_argument("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

inline double norm(const std::vector<double>& v) {
  return std::sqrt(dot(v, v));
}

/// Cosine similarity clamped to [-1, 1]. Vectors with norm below 1e-12 are
/// treated as uninformative and yield 0.
inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  const double nu = norm(u);
  const double nv = norm(v);
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

}  // namespace framepick
