#include "cgx/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cgx/autograd.hpp"
#include "cgx/explainer.hpp"
#include "cgx/graph.hpp"
#include "cgx/model.hpp"
#include "cgx/rng.hpp"

namespace cgx {

namespace {

constexpr double kPrimitiveTol = 1e-6;
constexpr double kCompositeTol = 1e-4;

struct Reporter {
  std::ostream& os;
  bool all_ok = true;

  void line(const std::string& name, double err, double tol) {
    const bool ok = err < tol;
    all_ok = all_ok && ok;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-4s %-42s max rel err %.3e (tol %.0e)\n",
                  ok ? "PASS" : "FAIL", name.c_str(), err, tol);
    os << buf;
  }
};

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Scalarizes a tensor-valued primitive with fixed random coefficients and
// checks d(Σ c·y)/dx against central differences.
double check_op(Rng& rng, int instances, std::size_t input_len,
                const std::function<Tape::Var(Tape&, Tape::Var)>& build,
                const std::function<std::vector<double>(Rng&)>& sample,
                const std::function<Tensor2(const std::vector<double>&)>& shape) {
  double worst = 0.0;
  for (int inst = 0; inst < instances; ++inst) {
    const std::vector<double> point = sample(rng);
    Tape probe;
    const Tape::Var px = probe.leaf(shape(point));
    const Tape::Var py = build(probe, px);
    Tensor2 coeffs(probe.value(py).rows, probe.value(py).cols);
    for (auto& c : coeffs.data) c = rng.uniform(-1.0, 1.0);

    const auto f = [&](const std::vector<double>& xs) {
      Tape t;
      const Tape::Var x = t.leaf(shape(xs));
      const Tape::Var y = build(t, x);
      const Tape::Var s = t.weighted_sum(y, coeffs);
      return t.value(s).at(0, 0);
    };

    Tape t;
    const Tape::Var x = t.leaf(shape(point));
    const Tape::Var y = build(t, x);
    const Tape::Var s = t.weighted_sum(y, coeffs);
    t.backward(s);
    const std::vector<double> analytic = t.grad(x).data;
    worst = std::max(worst, grad_check(f, point, analytic));
    (void)input_len;
  }
  return worst;
}

CellGraph random_graph(Rng& rng, int nodes, int feature_dim) {
  std::vector<NucleusRecord> nuclei;
  for (int i = 0; i < nodes; ++i) {
    NucleusRecord rec;
    rec.x = rng.uniform(0.0, 100.0);
    rec.y = rng.uniform(0.0, 100.0);
    rec.features = random_vec(rng, static_cast<std::size_t>(feature_dim));
    nuclei.push_back(std::move(rec));
  }
  GraphConfig gc;
  gc.k = 2;
  gc.max_edge_px = 120.0;
  return build_cell_graph(nuclei, 100.0, 100.0, gc);
}

std::vector<double> flatten(const std::vector<Tensor2>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

void unflatten(const std::vector<double>& flat, std::vector<Tensor2>& ts) {
  std::size_t off = 0;
  for (auto& t : ts) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + t.data.size()), t.data.begin());
    off += t.data.size();
  }
}

}  // namespace

bool run_gradcheck(std::uint64_t seed, std::ostream& os) {
  Rng rng(seed);
  Reporter rep{os};
  const int kInstances = 50;

  const auto row_shape = [](int cols) {
    return [cols](const std::vector<double>& v) {
      Tensor2 t(1, cols);
      t.data = v;
      return t;
    };
  };
  const auto mat_shape = [](int rows, int cols) {
    return [rows, cols](const std::vector<double>& v) {
      Tensor2 t(rows, cols);
      t.data = v;
      return t;
    };
  };

  // matmul, both operands
  {
    Tensor2 B(4, 2);
    for (auto& v : B.data) v = rng.uniform(-1.0, 1.0);
    rep.line("matmul (left operand)",
             check_op(
                 rng, kInstances, 12,
                 [&](Tape& t, Tape::Var x) { return t.matmul(x, t.constant(B)); },
                 [](Rng& r) { return random_vec(r, 12); }, mat_shape(3, 4)),
             kPrimitiveTol);
    Tensor2 A(3, 4);
    for (auto& v : A.data) v = rng.uniform(-1.0, 1.0);
    rep.line("matmul (right operand)",
             check_op(
                 rng, kInstances, 8,
                 [&](Tape& t, Tape::Var x) { return t.matmul(t.constant(A), x); },
                 [](Rng& r) { return random_vec(r, 8); }, mat_shape(4, 2)),
             kPrimitiveTol);
  }

  {
    Tensor2 bias(1, 4);
    for (auto& v : bias.data) v = rng.uniform(-1.0, 1.0);
    rep.line("add_bias (input)",
             check_op(
                 rng, kInstances, 12,
                 [&](Tape& t, Tape::Var x) { return t.add_bias(x, t.constant(bias)); },
                 [](Rng& r) { return random_vec(r, 12); }, mat_shape(3, 4)),
             kPrimitiveTol);
    Tensor2 X(3, 4);
    for (auto& v : X.data) v = rng.uniform(-1.0, 1.0);
    rep.line("add_bias (bias)",
             check_op(
                 rng, kInstances, 4,
                 [&](Tape& t, Tape::Var x) { return t.add_bias(t.constant(X), x); },
                 [](Rng& r) { return random_vec(r, 4); }, row_shape(4)),
             kPrimitiveTol);
  }

  // keep relu inputs away from the kink
  rep.line("relu",
           check_op(
               rng, kInstances, 12,
               [](Tape& t, Tape::Var x) { return t.relu(x); },
               [](Rng& r) {
                 std::vector<double> v(12);
                 for (auto& x : v) {
                   x = r.uniform(0.01, 1.0);
                   if (r.uniform() < 0.5) x = -x;
                 }
                 return v;
               },
               mat_shape(3, 4)),
           kPrimitiveTol);

  rep.line("sigmoid",
           check_op(
               rng, kInstances, 8,
               [](Tape& t, Tape::Var x) { return t.sigmoid(x); },
               [](Rng& r) { return random_vec(r, 8, -4.0, 4.0); }, row_shape(8)),
           kPrimitiveTol);

  {
    Tensor2 S(3, 1);
    for (auto& v : S.data) v = rng.uniform(0.1, 1.0);
    rep.line("row_scale (matrix)",
             check_op(
                 rng, kInstances, 12,
                 [&](Tape& t, Tape::Var x) { return t.row_scale(x, t.constant(S)); },
                 [](Rng& r) { return random_vec(r, 12); }, mat_shape(3, 4)),
             kPrimitiveTol);
    Tensor2 X(3, 4);
    for (auto& v : X.data) v = rng.uniform(-1.0, 1.0);
    rep.line("row_scale (scales)",
             check_op(
                 rng, kInstances, 3,
                 [&](Tape& t, Tape::Var x) { return t.row_scale(t.constant(X), x); },
                 [](Rng& r) { return random_vec(r, 3); },
                 [](const std::vector<double>& v) { return Tensor2::from_col(v); }),
             kPrimitiveTol);
  }

  {
    const std::vector<std::vector<int>> nbrs = {{1, 2}, {0}, {0, 3}, {2}};
    rep.line("neighbor_sum",
             check_op(
                 rng, kInstances, 8,
                 [&](Tape& t, Tape::Var x) { return t.neighbor_sum(x, nbrs); },
                 [](Rng& r) { return random_vec(r, 8); }, mat_shape(4, 2)),
             kPrimitiveTol);
  }

  {
    const std::vector<std::pair<int, int>> ranges = {{0, 2}, {2, 5}};
    rep.line("range_sum_rows",
             check_op(
                 rng, kInstances, 15,
                 [&](Tape& t, Tape::Var x) { return t.range_sum_rows(x, ranges); },
                 [](Rng& r) { return random_vec(r, 15); }, mat_shape(5, 3)),
             kPrimitiveTol);
    rep.line("range_mean_rows",
             check_op(
                 rng, kInstances, 15,
                 [&](Tape& t, Tape::Var x) { return t.range_mean_rows(x, ranges); },
                 [](Rng& r) { return random_vec(r, 15); }, mat_shape(5, 3)),
             kPrimitiveTol);
  }

  rep.line("softmax",
           check_op(
               rng, kInstances, 6,
               [](Tape& t, Tape::Var x) { return t.softmax(x); },
               [](Rng& r) { return random_vec(r, 6, -3.0, 3.0); }, mat_shape(2, 3)),
           kPrimitiveTol);

  rep.line("softmax_cross_entropy",
           check_op(
               rng, kInstances, 6,
               [](Tape& t, Tape::Var x) { return t.softmax_cross_entropy(x, {1, 2}); },
               [](Rng& r) { return random_vec(r, 6, -3.0, 3.0); }, mat_shape(2, 3)),
           kPrimitiveTol);

  // kl_divergence, both operands; FD perturbs raw probabilities, so inputs
  // are sampled strictly inside the simplex
  {
    const auto simplex = [](Rng& r) {
      std::vector<double> v = softmax_vec(random_vec(r, 4, -1.5, 1.5));
      return v;
    };
    const std::vector<double> qfix = softmax_vec(random_vec(rng, 4, -1.5, 1.5));
    rep.line("kl_divergence (p)",
             check_op(
                 rng, kInstances, 4,
                 [&](Tape& t, Tape::Var x) {
                   return t.kl_divergence(x, t.constant(Tensor2::from_row(qfix)));
                 },
                 simplex, row_shape(4)),
             kPrimitiveTol);
    const std::vector<double> pfix = softmax_vec(random_vec(rng, 4, -1.5, 1.5));
    rep.line("kl_divergence (q)",
             check_op(
                 rng, kInstances, 4,
                 [&](Tape& t, Tape::Var x) {
                   return t.kl_divergence(t.constant(Tensor2::from_row(pfix)), x);
                 },
                 simplex, row_shape(4)),
             kPrimitiveTol);
  }

  rep.line("mean_binary_entropy",
           check_op(
               rng, kInstances, 6,
               [](Tape& t, Tape::Var x) { return t.mean_binary_entropy(x); },
               [](Rng& r) { return random_vec(r, 6, 0.02, 0.98); }, row_shape(6)),
           kPrimitiveTol);

  rep.line("sum_all",
           check_op(
               rng, kInstances, 12,
               [](Tape& t, Tape::Var x) { return t.sum_all(x); },
               [](Rng& r) { return random_vec(r, 12); }, mat_shape(3, 4)),
           kPrimitiveTol);

  // ---- composites on a 6-node graph ----

  const int feature_dim = 16;
  const CellGraph graph = random_graph(rng, 6, feature_dim);
  CgnnConfig mcfg;
  mcfg.seed = rng.next_u64();
  CgnnModel model = init_model(mcfg, GraphConfig{}, graph.node_features.cols, 3,
                               {"c0", "c1", "c2"});
  const int target = 1;

  {
    const auto loss_at = [&](const std::vector<double>& flat) {
      CgnnModel m = model;
      unflatten(flat, m.params);
      Tape t;
      const ForwardVars fv = forward_on_tape(t, m, graph, {{0, graph.num_nodes}});
      const Tape::Var loss = t.softmax_cross_entropy(fv.logits, {target});
      return t.value(loss).at(0, 0);
    };
    Tape t;
    const ForwardVars fv = forward_on_tape(t, model, graph, {{0, graph.num_nodes}});
    const Tape::Var loss = t.softmax_cross_entropy(fv.logits, {target});
    t.backward(loss);
    std::vector<Tensor2> grads;
    for (Tape::Var p : fv.params) grads.push_back(t.grad(p));
    rep.line("cgnn training loss wrt all parameters",
             grad_check(loss_at, flatten(model.params), flatten(grads)), kCompositeTol);
  }

  {
    const Prediction original = predict(model, graph);
    ExplainerConfig ecfg;
    std::vector<double> mask = random_vec(rng, static_cast<std::size_t>(graph.num_nodes), -1.0, 1.0);

    // λ is a weighting heuristic held constant during differentiation; pin it
    // at the evaluation point so the finite-difference probe sees the same
    // function the analytic gradient differentiates.
    double lambda_at_point;
    {
      Tape t;
      const Tape::Var m = t.leaf(Tensor2::from_col(mask));
      const LossParts parts = explainer_loss_on_tape(t, model, graph, m, original, ecfg);
      lambda_at_point = parts.lambda;
    }
    const auto loss_at = [&](const std::vector<double>& ms) {
      Tape t;
      const Tape::Var m = t.leaf(Tensor2::from_col(ms));
      const LossParts parts =
          explainer_loss_on_tape(t, model, graph, m, original, ecfg, lambda_at_point);
      return parts.total_value;
    };
    Tape t;
    const Tape::Var m = t.leaf(Tensor2::from_col(mask));
    const LossParts parts =
        explainer_loss_on_tape(t, model, graph, m, original, ecfg, lambda_at_point);
    t.backward(parts.total);
    rep.line("explainer loss wrt mask logits",
             grad_check(loss_at, mask, t.grad(m).data), kCompositeTol);
  }

  os << (rep.all_ok ? "gradcheck: all checks passed\n" : "gradcheck: FAILURES present\n");
  return rep.all_ok;
}

}  // namespace cgx
