#pragma once

#include <cstdint>
#include <vector>

#include "gnnlab/tensor.hpp"

namespace gnnlab {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Classic L2 coupling: weight_decay * theta is added to the gradient
  // before the moment updates.
  double weight_decay = 0.0;
};

struct AdamState {
  std::int64_t t = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<Tensor>& params) {
    t = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
      v.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    }
  }
};

// One update with bias-corrected moments. Parameters must be passed in
// the same order as at init time.
void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace gnnlab
