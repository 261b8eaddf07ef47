#include "gnnlab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gnnlab/rng.hpp"

namespace gnnlab {

GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<Tensor>& params, double step_scale,
                               std::int64_t max_coords_per_param, std::uint64_t subsample_seed) {
  Tensor loss = loss_fn();
  Tape tape(loss);
  tape.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  GradCheckReport rep;
  Rng rng(subsample_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    // const_cast-free mutation: Tensor is a handle, value() is shared.
    auto& theta = const_cast<Tensor&>(params[pi]).value();
    std::vector<std::int64_t> coords(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) coords[i] = static_cast<std::int64_t>(i);
    if (max_coords_per_param >= 0 &&
        static_cast<std::int64_t>(coords.size()) > max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(static_cast<std::size_t>(max_coords_per_param));
      std::sort(coords.begin(), coords.end());
    }
    for (std::int64_t ci : coords) {
      const double saved = theta[static_cast<std::size_t>(ci)];
      const double h = step_scale * std::max(1.0, std::abs(saved));
      theta[static_cast<std::size_t>(ci)] = saved + h;
      const double lp = loss_fn().item();
      theta[static_cast<std::size_t>(ci)] = saved - h;
      const double lm = loss_fn().item();
      theta[static_cast<std::size_t>(ci)] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[pi][static_cast<std::size_t>(ci)];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err);
      ++rep.coords_checked;
    }
  }
  return rep;
}

}  // namespace gnnlab
