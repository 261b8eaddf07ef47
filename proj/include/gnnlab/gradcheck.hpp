#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gnnlab/tensor.hpp"

namespace gnnlab {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::int64_t coords_checked = 0;
};

// Compares reverse-mode gradients of a scalar loss against central
// finite differences. `loss_fn` must rebuild the forward pass from the
// current parameter values and be deterministic (no dropout).
//
// Per coordinate: h = step_scale * max(1, |theta_i|), and
//   rel_err = |analytic - numeric| / max(1, |analytic|, |numeric|).
// With max_coords_per_param >= 0, a deterministic subsample of that
// many coordinates per parameter is checked.
GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<Tensor>& params, double step_scale = 1e-5,
                               std::int64_t max_coords_per_param = -1,
                               std::uint64_t subsample_seed = 12345);

}  // namespace gnnlab
