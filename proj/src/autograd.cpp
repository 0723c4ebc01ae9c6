#include "cgx/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cgx {

namespace {
constexpr double kLogClamp = 1e-12;

double clamped_log(double x) { return std::log(std::max(x, kLogClamp)); }

[[noreturn]] void shape_error(const std::string& op) {
  throw std::invalid_argument("shape mismatch in " + op);
}
}  // namespace

Tape::Var Tape::push(Tensor2 value, std::function<void(Tape&, const Tensor2&)> back) {
  Node n;
  n.value = std::move(value);
  n.grad = Tensor2(n.value.rows, n.value.cols, 0.0);
  n.backward = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::leaf(Tensor2 value) { return push(std::move(value), nullptr); }

Tape::Var Tape::matmul(Var a, Var b) {
  const Tensor2& A = value(a);
  const Tensor2& B = value(b);
  if (A.cols != B.rows) shape_error("matmul");
  Tensor2 out(A.rows, B.cols, 0.0);
  for (int i = 0; i < A.rows; ++i)
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < B.cols; ++j) out.at(i, j) += aik * B.at(k, j);
    }
  return push(std::move(out), [a, b](Tape& t, const Tensor2& g) {
    const Tensor2& A = t.value(a);
    const Tensor2& B = t.value(b);
    Tensor2& dA = t.grad_ref(a);
    Tensor2& dB = t.grad_ref(b);
    for (int i = 0; i < A.rows; ++i)
      for (int j = 0; j < B.cols; ++j) {
        const double gij = g.at(i, j);
        if (gij == 0.0) continue;
        for (int k = 0; k < A.cols; ++k) {
          dA.at(i, k) += gij * B.at(k, j);
          dB.at(k, j) += A.at(i, k) * gij;
        }
      }
  });
}

Tape::Var Tape::add(Var a, Var b) {
  const Tensor2& A = value(a);
  const Tensor2& B = value(b);
  if (!A.same_shape(B)) shape_error("add");
  Tensor2 out = A;
  for (int i = 0; i < out.size(); ++i) out.data[static_cast<std::size_t>(i)] += B.data[static_cast<std::size_t>(i)];
  return push(std::move(out), [a, b](Tape& t, const Tensor2& g) {
    Tensor2& dA = t.grad_ref(a);
    Tensor2& dB = t.grad_ref(b);
    for (int i = 0; i < g.size(); ++i) {
      dA.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
      dB.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
    }
  });
}

Tape::Var Tape::add_bias(Var x, Var bias) {
  const Tensor2& X = value(x);
  const Tensor2& B = value(bias);
  if (B.rows != 1 || B.cols != X.cols) shape_error("add_bias");
  Tensor2 out = X;
  for (int i = 0; i < X.rows; ++i)
    for (int j = 0; j < X.cols; ++j) out.at(i, j) += B.at(0, j);
  return push(std::move(out), [x, bias](Tape& t, const Tensor2& g) {
    Tensor2& dX = t.grad_ref(x);
    Tensor2& dB = t.grad_ref(bias);
    for (int i = 0; i < g.rows; ++i)
      for (int j = 0; j < g.cols; ++j) {
        dX.at(i, j) += g.at(i, j);
        dB.at(0, j) += g.at(i, j);
      }
  });
}

Tape::Var Tape::relu(Var x) {
  Tensor2 out = value(x);
  for (double& v : out.data) v = std::max(v, 0.0);
  return push(std::move(out), [x](Tape& t, const Tensor2& g) {
    const Tensor2& X = t.value(x);
    Tensor2& dX = t.grad_ref(x);
    for (int i = 0; i < g.size(); ++i)
      if (X.data[static_cast<std::size_t>(i)] > 0.0)
        dX.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
  });
}

Tape::Var Tape::sigmoid(Var x) {
  Tensor2 out = value(x);
  for (double& v : out.data) v = sigmoid_scalar(v);
  Var self = push(std::move(out), nullptr);
  nodes_[static_cast<std::size_t>(self)].backward = [x, self](Tape& t, const Tensor2& g) {
    const Tensor2& S = t.value(self);
    Tensor2& dX = t.grad_ref(x);
    for (int i = 0; i < g.size(); ++i) {
      const double s = S.data[static_cast<std::size_t>(i)];
      dX.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)] * s * (1.0 - s);
    }
  };
  return self;
}

Tape::Var Tape::scale(Var x, double c) {
  Tensor2 out = value(x);
  for (double& v : out.data) v *= c;
  return push(std::move(out), [x, c](Tape& t, const Tensor2& g) {
    Tensor2& dX = t.grad_ref(x);
    for (int i = 0; i < g.size(); ++i) dX.data[static_cast<std::size_t>(i)] += c * g.data[static_cast<std::size_t>(i)];
  });
}

Tape::Var Tape::row_scale(Var x, Var s) {
  const Tensor2& X = value(x);
  const Tensor2& S = value(s);
  if (S.cols != 1 || S.rows != X.rows) shape_error("row_scale");
  Tensor2 out = X;
  for (int i = 0; i < X.rows; ++i)
    for (int j = 0; j < X.cols; ++j) out.at(i, j) *= S.at(i, 0);
  return push(std::move(out), [x, s](Tape& t, const Tensor2& g) {
    const Tensor2& X = t.value(x);
    const Tensor2& S = t.value(s);
    Tensor2& dX = t.grad_ref(x);
    Tensor2& dS = t.grad_ref(s);
    for (int i = 0; i < X.rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < X.cols; ++j) {
        dX.at(i, j) += g.at(i, j) * S.at(i, 0);
        acc += g.at(i, j) * X.at(i, j);
      }
      dS.at(i, 0) += acc;
    }
  });
}

Tape::Var Tape::neighbor_sum(Var h, const std::vector<std::vector<int>>& neighbors) {
  const Tensor2& H = value(h);
  if (static_cast<int>(neighbors.size()) != H.rows) shape_error("neighbor_sum");
  Tensor2 out(H.rows, H.cols, 0.0);
  for (int v = 0; v < H.rows; ++v)
    for (int u : neighbors[static_cast<std::size_t>(v)])
      for (int j = 0; j < H.cols; ++j) out.at(v, j) += H.at(u, j);
  // Adjacency is symmetric, so the transpose aggregation reuses the same lists.
  return push(std::move(out), [h, neighbors](Tape& t, const Tensor2& g) {
    Tensor2& dH = t.grad_ref(h);
    for (int v = 0; v < g.rows; ++v)
      for (int u : neighbors[static_cast<std::size_t>(v)])
        for (int j = 0; j < g.cols; ++j) dH.at(u, j) += g.at(v, j);
  });
}

Tape::Var Tape::range_sum_rows(Var x, const std::vector<std::pair<int, int>>& ranges) {
  const Tensor2& X = value(x);
  Tensor2 out(static_cast<int>(ranges.size()), X.cols, 0.0);
  for (std::size_t b = 0; b < ranges.size(); ++b) {
    const auto [lo, hi] = ranges[b];
    if (lo < 0 || hi > X.rows || lo >= hi) shape_error("range_sum_rows");
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < X.cols; ++j) out.at(static_cast<int>(b), j) += X.at(i, j);
  }
  return push(std::move(out), [x, ranges](Tape& t, const Tensor2& g) {
    Tensor2& dX = t.grad_ref(x);
    for (std::size_t b = 0; b < ranges.size(); ++b) {
      const auto [lo, hi] = ranges[b];
      for (int i = lo; i < hi; ++i)
        for (int j = 0; j < g.cols; ++j) dX.at(i, j) += g.at(static_cast<int>(b), j);
    }
  });
}

Tape::Var Tape::range_mean_rows(Var x, const std::vector<std::pair<int, int>>& ranges) {
  const Tensor2& X = value(x);
  Tensor2 out(static_cast<int>(ranges.size()), X.cols, 0.0);
  for (std::size_t b = 0; b < ranges.size(); ++b) {
    const auto [lo, hi] = ranges[b];
    if (lo < 0 || hi > X.rows || lo >= hi) shape_error("range_mean_rows");
    const double inv = 1.0 / (hi - lo);
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < X.cols; ++j) out.at(static_cast<int>(b), j) += inv * X.at(i, j);
  }
  return push(std::move(out), [x, ranges](Tape& t, const Tensor2& g) {
    Tensor2& dX = t.grad_ref(x);
    for (std::size_t b = 0; b < ranges.size(); ++b) {
      const auto [lo, hi] = ranges[b];
      const double inv = 1.0 / (hi - lo);
      for (int i = lo; i < hi; ++i)
        for (int j = 0; j < g.cols; ++j) dX.at(i, j) += inv * g.at(static_cast<int>(b), j);
    }
  });
}

Tape::Var Tape::sum_all(Var x) {
  const Tensor2& X = value(x);
  double total = 0.0;
  for (double v : X.data) total += v;
  Tensor2 out(1, 1, total);
  return push(std::move(out), [x](Tape& t, const Tensor2& g) {
    Tensor2& dX = t.grad_ref(x);
    for (double& v : dX.data) v += g.at(0, 0);
  });
}

Tape::Var Tape::weighted_sum(Var x, Tensor2 coeffs) {
  const Tensor2& X = value(x);
  if (!X.same_shape(coeffs)) shape_error("weighted_sum");
  double total = 0.0;
  for (int i = 0; i < X.size(); ++i)
    total += coeffs.data[static_cast<std::size_t>(i)] * X.data[static_cast<std::size_t>(i)];
  return push(Tensor2(1, 1, total), [x, c = std::move(coeffs)](Tape& t, const Tensor2& g) {
    Tensor2& dX = t.grad_ref(x);
    for (int i = 0; i < dX.size(); ++i)
      dX.data[static_cast<std::size_t>(i)] += g.at(0, 0) * c.data[static_cast<std::size_t>(i)];
  });
}

Tape::Var Tape::softmax(Var x) {
  const Tensor2& X = value(x);
  Tensor2 out(X.rows, X.cols, 0.0);
  for (int i = 0; i < X.rows; ++i) {
    double mx = X.at(i, 0);
    for (int j = 1; j < X.cols; ++j) mx = std::max(mx, X.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < X.cols; ++j) denom += std::exp(X.at(i, j) - mx);
    for (int j = 0; j < X.cols; ++j) out.at(i, j) = std::exp(X.at(i, j) - mx) / denom;
  }
  Var self = push(std::move(out), nullptr);
  nodes_[static_cast<std::size_t>(self)].backward = [x, self](Tape& t, const Tensor2& g) {
    const Tensor2& S = t.value(self);
    Tensor2& dX = t.grad_ref(x);
    for (int i = 0; i < S.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < S.cols; ++j) dot += g.at(i, j) * S.at(i, j);
      for (int j = 0; j < S.cols; ++j) dX.at(i, j) += S.at(i, j) * (g.at(i, j) - dot);
    }
  };
  return self;
}

Tape::Var Tape::softmax_cross_entropy(Var logits, const std::vector<int>& targets) {
  const Tensor2& L = value(logits);
  if (static_cast<int>(targets.size()) != L.rows) shape_error("softmax_cross_entropy");
  for (int t : targets)
    if (t < 0 || t >= L.cols) throw std::invalid_argument("softmax_cross_entropy: target out of range");
  double total = 0.0;
  for (int i = 0; i < L.rows; ++i) {
    double mx = L.at(i, 0);
    for (int j = 1; j < L.cols; ++j) mx = std::max(mx, L.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < L.cols; ++j) denom += std::exp(L.at(i, j) - mx);
    total += mx + std::log(denom) - L.at(i, targets[static_cast<std::size_t>(i)]);
  }
  total /= L.rows;
  return push(Tensor2(1, 1, total), [logits, targets](Tape& t, const Tensor2& g) {
    const Tensor2& L = t.value(logits);
    Tensor2& dL = t.grad_ref(logits);
    const double scale = g.at(0, 0) / L.rows;
    for (int i = 0; i < L.rows; ++i) {
      double mx = L.at(i, 0);
      for (int j = 1; j < L.cols; ++j) mx = std::max(mx, L.at(i, j));
      double denom = 0.0;
      for (int j = 0; j < L.cols; ++j) denom += std::exp(L.at(i, j) - mx);
      for (int j = 0; j < L.cols; ++j) {
        const double p = std::exp(L.at(i, j) - mx) / denom;
        const double onehot = (j == targets[static_cast<std::size_t>(i)]) ? 1.0 : 0.0;
        dL.at(i, j) += scale * (p - onehot);
      }
    }
  });
}

Tape::Var Tape::kl_divergence(Var p, Var q) {
  const Tensor2& P = value(p);
  const Tensor2& Q = value(q);
  if (!P.same_shape(Q)) shape_error("kl_divergence");
  for (int i = 0; i < P.rows; ++i) {
    double sp = 0.0, sq = 0.0;
    for (int j = 0; j < P.cols; ++j) {
      sp += P.at(i, j);
      sq += Q.at(i, j);
    }
    // loose enough for finite-difference probes that nudge one entry
    if (std::abs(sp - 1.0) > 1e-5 || std::abs(sq - 1.0) > 1e-5)
      throw std::invalid_argument("kl_divergence: inputs must be probability rows");
  }
  double total = 0.0;
  for (int i = 0; i < P.size(); ++i) {
    const double pi = P.data[static_cast<std::size_t>(i)];
    const double qi = Q.data[static_cast<std::size_t>(i)];
    if (pi > 0.0) total += pi * (clamped_log(pi) - clamped_log(qi));
  }
  return push(Tensor2(1, 1, total), [p, q](Tape& t, const Tensor2& g) {
    const Tensor2& P = t.value(p);
    const Tensor2& Q = t.value(q);
    Tensor2& dP = t.grad_ref(p);
    Tensor2& dQ = t.grad_ref(q);
    for (int i = 0; i < P.size(); ++i) {
      const double pi = P.data[static_cast<std::size_t>(i)];
      const double qi = std::max(Q.data[static_cast<std::size_t>(i)], kLogClamp);
      dP.data[static_cast<std::size_t>(i)] +=
          g.at(0, 0) * (clamped_log(pi) - clamped_log(qi) + 1.0);
      dQ.data[static_cast<std::size_t>(i)] += g.at(0, 0) * (-pi / qi);
    }
  });
}

Tape::Var Tape::mean_binary_entropy(Var p) {
  const Tensor2& P = value(p);
  double total = 0.0;
  for (double v : P.data) total += -v * clamped_log(v) - (1.0 - v) * clamped_log(1.0 - v);
  total /= P.size();
  return push(Tensor2(1, 1, total), [p](Tape& t, const Tensor2& g) {
    const Tensor2& P = t.value(p);
    Tensor2& dP = t.grad_ref(p);
    const double scale = g.at(0, 0) / P.size();
    for (int i = 0; i < P.size(); ++i) {
      const double v = std::clamp(P.data[static_cast<std::size_t>(i)], kLogClamp, 1.0 - kLogClamp);
      dP.data[static_cast<std::size_t>(i)] += scale * std::log((1.0 - v) / v);
    }
  });
}

void Tape::backward(Var out) {
  Node& o = nodes_[static_cast<std::size_t>(out)];
  if (o.value.rows != 1 || o.value.cols != 1)
    throw std::invalid_argument("backward: output must be scalar");
  o.grad.at(0, 0) = 1.0;
  for (int i = out; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward) n.backward(*this, n.grad);
  }
}

std::vector<double> softmax_vec(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

double shannon_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double mean_binary_entropy_value(const std::vector<double>& p) {
  double total = 0.0;
  for (double v : p) total += -v * clamped_log(v) - (1.0 - v) * clamped_log(1.0 - v);
  return total / static_cast<double>(p.size());
}

double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  const std::vector<double>& point,
                  const std::vector<double>& analytic, double h) {
  double worst = 0.0;
  std::vector<double> x = point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace cgx
