#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace gnnlab {

// Dense row-major matrix of doubles. Plain data, no autodiff.
struct Mat {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::int64_t r, std::int64_t c) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), 0.0) {}

  double& at(std::int64_t r, std::int64_t c) { return v[static_cast<std::size_t>(r * cols + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return v[static_cast<std::size_t>(r * cols + c)]; }
  double* row(std::int64_t r) { return v.data() + r * cols; }
  const double* row(std::int64_t r) const { return v.data() + r * cols; }
  std::int64_t size() const { return rows * cols; }

  double frobenius_norm() const {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }
};

inline Mat operator-(const Mat& a, const Mat& b) {
  assert(a.rows == b.rows && a.cols == b.cols);
  Mat out(a.rows, a.cols);
  for (std::int64_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  return out;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  assert(a.rows == b.rows && a.cols == b.cols);
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace gnnlab
