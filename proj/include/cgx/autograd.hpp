#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cgx/tensor.hpp"

namespace cgx {

// Reverse-mode tape over Tensor2 values. One tape per optimization step;
// nodes are appended in evaluation order, so reverse insertion order is a
// valid reverse-topological sweep. Gradients accumulate additively at fan-out.
class Tape {
 public:
  using Var = int;

  Var leaf(Tensor2 value);
  // Same as leaf; gradient is computed but callers treat it as fixed input.
  Var constant(Tensor2 value) { return leaf(std::move(value)); }

  const Tensor2& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  const Tensor2& grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_bias(Var x, Var bias);  // bias 1×cols, broadcast over rows
  Var relu(Var x);
  Var sigmoid(Var x);
  Var scale(Var x, double c);
  Var row_scale(Var x, Var s);  // s is rows×1; scales row i of x by s_i
  Var neighbor_sum(Var h, const std::vector<std::vector<int>>& neighbors);
  Var range_sum_rows(Var x, const std::vector<std::pair<int, int>>& ranges);
  Var range_mean_rows(Var x, const std::vector<std::pair<int, int>>& ranges);
  Var sum_all(Var x);
  Var weighted_sum(Var x, Tensor2 coeffs);  // Σ c_i x_i, scalar
  Var softmax(Var x);                        // row-wise
  Var softmax_cross_entropy(Var logits, const std::vector<int>& targets);  // mean over rows
  Var kl_divergence(Var p, Var q);  // Σ p ln(p/q), probability rows
  Var mean_binary_entropy(Var p);   // mean over elements, p in [0,1]

  // Seeds d(out)/d(out)=1 and sweeps the tape. out must be 1×1.
  void backward(Var out);

  int num_nodes() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;
    std::function<void(Tape&, const Tensor2&)> backward;  // adds into parent grads
  };

  Var push(Tensor2 value, std::function<void(Tape&, const Tensor2&)> back);
  Tensor2& grad_ref(Var v) { return nodes_[static_cast<std::size_t>(v)].grad; }

  std::vector<Node> nodes_;
};

// ---- scalar / vector helpers shared across modules ----

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax_vec(const std::vector<double>& logits);

// −Σ p ln p in nats, 0·ln 0 := 0
double shannon_entropy(const std::vector<double>& p);

// mean of −p ln p − (1−p) ln(1−p) with logs clamped at 1e-12
double mean_binary_entropy_value(const std::vector<double>& p);

// Central finite differences (h = 1e-6) against an analytic gradient.
// Returns max over coordinates of |g_a − g_n| / max(1, |g_a|, |g_n|).
double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& point,
                  const std::vector<double>& analytic, double h = 1e-6);

}  // namespace cgx
