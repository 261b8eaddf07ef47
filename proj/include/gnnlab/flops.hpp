#pragma once

#include "gnnlab/graph.hpp"
#include "gnnlab/models.hpp"

namespace gnnlab {

// Analytic forward-pass FLOP count. Convention (documented because no
// standard exists): multiply = add = exp = divide = 1 FLOP.
//   dense transform        2 * N * d_in * d_out        (MAC counting)
//   sparse aggregation     2 * nnz * d_out, nnz = off-diagonal entries
//                          (GCN's +I diagonal term is folded for free)
//   attention scoring      2 * E * (2 d_h) per head, E incl self-loops
//   leaky relu on scores   E
//   edge softmax           3 * E (exp, accumulate, divide)
//   attention aggregation  2 * E * d_h per head
//   head averaging         heads * N * d_out (skipped for 1 head)
//   activations/residual   1 per scalar on hidden layers
// Edges pruned at a layer are excluded from that layer's E.
struct FlopBreakdown {
  double transform = 0;
  double aggregation = 0;
  double attention = 0;  // scoring + leaky relu
  double softmax = 0;
  double combine = 0;
  double activation = 0;

  double total() const {
    return transform + aggregation + attention + softmax + combine + activation;
  }
  double gflops() const { return total() / 1e9; }
};

FlopBreakdown count_flops(const ModelConfig& cfg, const Graph& g,
                          const PruneState* st = nullptr);

}  // namespace gnnlab
