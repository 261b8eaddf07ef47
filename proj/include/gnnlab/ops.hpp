#pragma once

#include <cstdint>
#include <vector>

#include "gnnlab/rng.hpp"
#include "gnnlab/sparse.hpp"
#include "gnnlab/tensor.hpp"

namespace gnnlab {

enum class Activation { identity, relu, leaky_relu, elu, tanh };

Activation activation_from_string(const std::string& s);
const char* activation_name(Activation a);

// Dense product a (m x k) * b (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);

// Sparse-dense product s * x with constant sparse coefficients. The
// matrix is captured by shared pointer so the backward pass can outlive
// the caller's frame.
Tensor spmm(const std::shared_ptr<const SparseMatrix>& s, const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor elu(const Tensor& x, double alpha = 1.0);
Tensor tanh_act(const Tensor& x);
Tensor apply_activation(const Tensor& x, Activation act, double leaky_slope = 0.2);

// out[k, :] = x[idx[k], :].
Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& idx);

// out[idx[k], :] += x[k, :]; out has out_rows rows.
Tensor scatter_add_rows(const Tensor& x, const std::vector<std::int64_t>& idx,
                        std::int64_t out_rows);

// Softmax of scores (E x 1) over groups of equal seg[k]; each group is
// one node's incoming-edge neighborhood. Numerically stabilized by the
// per-group maximum.
Tensor segment_softmax(const Tensor& scores, const std::vector<std::int64_t>& seg,
                       std::int64_t num_segments);

// out[k, :] = x[k, :] * s[k, 0]; s is a column.
Tensor col_scale(const Tensor& x, const Tensor& s);

Tensor concat_cols(const std::vector<Tensor>& xs);

// Inverted dropout: keeps entries with probability 1 - p and scales by
// 1 / (1 - p). Call only in training mode; p == 0 passes through.
Tensor dropout(const Tensor& x, double p, Rng& rng);

// Mean negative log-likelihood of labels over rows with mask != 0,
// from raw logits via a stable log-softmax.
Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& labels,
                            const std::vector<std::uint8_t>& mask);

double masked_accuracy(const Mat& logits, const std::vector<int>& labels,
                       const std::vector<std::uint8_t>& mask);

}  // namespace gnnlab
