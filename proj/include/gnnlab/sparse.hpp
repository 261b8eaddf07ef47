#pragma once

#include <cstdint>
#include <vector>

#include "gnnlab/mat.hpp"

namespace gnnlab {

// CSR matrix with explicit values. Coefficients are constants with
// respect to differentiation (normalized adjacencies, fixed masks).
struct SparseMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<std::int64_t> row_ptr;  // size rows + 1
  std::vector<std::int64_t> col_idx;
  std::vector<double> vals;

  std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx.size()); }

  // y = S x for a dense vector.
  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        y[static_cast<std::size_t>(i)] += vals[static_cast<std::size_t>(k)] *
                                          x[static_cast<std::size_t>(col_idx[static_cast<std::size_t>(k)])];
    return y;
  }

  Mat to_dense() const {
    Mat d(rows, cols);
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
        d.at(i, col_idx[static_cast<std::size_t>(k)]) += vals[static_cast<std::size_t>(k)];
    return d;
  }
};

}  // namespace gnnlab
