#include "gnnlab/flops.hpp"

#include "gnnlab/prune.hpp"

namespace gnnlab {

FlopBreakdown count_flops(const ModelConfig& cfg, const Graph& g, const PruneState* st) {
  FlopBreakdown f;
  const double N = static_cast<double>(g.n);
  const double C = static_cast<double>(g.num_classes);
  const int T = cfg.depth;

  for (int l = 0; l < T; ++l) {
    const bool last = (l == T - 1);
    const double d_in = (l == 0) ? static_cast<double>(g.feature_dim())
                                 : static_cast<double>(cfg.hidden_dim);
    if (cfg.kind == ModelKind::gcn) {
      const double d_out = last ? C : static_cast<double>(cfg.hidden_dim);
      f.transform += 2.0 * N * d_in * d_out;
      f.aggregation += 2.0 * static_cast<double>(g.col_idx.size()) * d_out;
      if (!last) f.activation += N * d_out;
      if (!last && cfg.residual && d_in == d_out) f.activation += N * d_out;
      continue;
    }
    const int nh = last ? cfg.heads_out : cfg.heads_hidden;
    const double dh = last ? C : static_cast<double>(cfg.hidden_dim / cfg.heads_hidden);
    const double alive = (st && st->initialized)
                             ? static_cast<double>(st->alive_count(l))
                             : static_cast<double>(g.col_idx.size());
    const double E = alive + N;  // self-loops always attend
    for (int h = 0; h < nh; ++h) {
      f.transform += 2.0 * N * d_in * dh;
      f.attention += 2.0 * E * (2.0 * dh) + E;
      f.softmax += 3.0 * E;
      f.aggregation += 2.0 * E * dh;
    }
    if (nh > 1 && last) f.combine += static_cast<double>(nh) * N * dh;
    const double d_out = last ? C : static_cast<double>(nh) * dh;
    if (!last) f.activation += N * d_out;
    if (!last && cfg.residual && d_in == d_out) f.activation += N * d_out;
  }
  return f;
}

}  // namespace gnnlab
