#include "gnnlab/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace gnnlab {

void adam_step(std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != state.m.size()) throw std::runtime_error("adam_step: state not initialized");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& theta = params[pi].value();
    const auto& grad = params[pi].grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    if (grad.size() != theta.size()) throw std::runtime_error("adam_step: missing gradient");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] + cfg.weight_decay * theta[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace gnnlab
