#pragma once

#include <cstdint>
#include <vector>

#include "cgx/tensor.hpp"

namespace cgx {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // false: decoupled additive term lr·wd·param; true: wd·param folded into the gradient
  bool coupled_decay = false;
};

struct AdamState {
  std::vector<Tensor2> m;
  std::vector<Tensor2> v;
  std::int64_t step = 0;

  static AdamState like(const std::vector<Tensor2>& params);
};

// Standard Adam with bias correction. Throws "diverged" on non-finite gradients.
void adam_step(std::vector<Tensor2>& params, const std::vector<Tensor2>& grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace cgx
