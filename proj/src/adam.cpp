#include "cgx/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cgx {

AdamState AdamState::like(const std::vector<Tensor2>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.emplace_back(p.rows, p.cols, 0.0);
    s.v.emplace_back(p.rows, p.cols, 0.0);
  }
  return s;
}

void adam_step(std::vector<Tensor2>& params, const std::vector<Tensor2>& grads,
               AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor2& w = params[p];
    const Tensor2& g = grads[p];
    if (!w.same_shape(g)) throw std::invalid_argument("adam_step: shape mismatch");
    for (int i = 0; i < w.size(); ++i) {
      double gi = g.data[static_cast<std::size_t>(i)];
      if (!std::isfinite(gi)) throw std::runtime_error("diverged");
      double& wi = w.data[static_cast<std::size_t>(i)];
      if (cfg.coupled_decay) gi += cfg.weight_decay * wi;
      double& mi = state.m[p].data[static_cast<std::size_t>(i)];
      double& vi = state.v[p].data[static_cast<std::size_t>(i)];
      mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
      vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      wi -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      if (!cfg.coupled_decay) wi -= cfg.lr * cfg.weight_decay * wi;
    }
  }
}

}  // namespace cgx
