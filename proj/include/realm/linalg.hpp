#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace realm {

// Dense row-major matrix of doubles. Small fixed-shape numerics only.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }

  std::span<double> row(std::size_t r) {
    assert(r < rows);
    return {data.data() + r * cols, cols};
  }
  std::span<const double> row(std::size_t r) const {
    assert(r < rows);
    return {data.data() + r * cols, cols};
  }

  std::size_t size() const { return data.size(); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y = M x
inline void matvec(const Matrix& m, std::span<const double> x,
                   std::span<double> y) {
  assert(x.size() == m.cols && y.size() == m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) y[r] = dot(m.row(r), x);
}

// M += scale * u v^T
inline void add_outer(Matrix& m, double scale, std::span<const double> u,
                      std::span<const double> v) {
  assert(u.size() == m.rows && v.size() == m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double* mr = m.data.data() + r * m.cols;
    const double su = scale * u[r];
    for (std::size_t c = 0; c < m.cols; ++c) mr[c] += su * v[c];
  }
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace realm
