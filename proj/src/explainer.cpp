#include "cgx/explainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cgx/adam.hpp"
#include "cgx/rng.hpp"

namespace cgx {

namespace {

// threshold set, falling back to the single highest-σ node
std::vector<int> binarized_keep(const std::vector<double>& sigma, double threshold,
                                bool* forced) {
  std::vector<int> keep = binarize_mask(sigma, threshold);
  if (keep.empty()) {
    int best = 0;
    for (std::size_t i = 1; i < sigma.size(); ++i)
      if (sigma[i] > sigma[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    keep.push_back(best);
    if (forced) *forced = true;
  } else if (forced) {
    *forced = false;
  }
  return keep;
}

std::vector<double> sigmoid_all(const std::vector<double>& logits) {
  std::vector<double> s(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) s[i] = sigmoid_scalar(logits[i]);
  return s;
}

double midrange_fraction(const std::vector<double>& sigma) {
  int n = 0;
  for (double v : sigma)
    if (v >= 0.05 && v <= 0.95) ++n;
  return static_cast<double>(n) / static_cast<double>(sigma.size());
}

}  // namespace

KdParts kd_loss_on_tape(Tape& tape, Tape::Var student_logits,
                        const std::vector<double>& teacher_logits, const ExplainerConfig& cfg,
                        std::optional<double> fixed_lambda) {
  const Tensor2& student = tape.value(student_logits);
  if (student.rows != 1 || student.cols != static_cast<int>(teacher_logits.size()))
    throw std::invalid_argument("kd_loss: logit length mismatch");

  const std::vector<double> teacher_probs = softmax_vec(teacher_logits);
  const double teacher_entropy = shannon_entropy(teacher_probs);
  double lambda;
  if (fixed_lambda) {
    lambda = *fixed_lambda;
  } else {
    const double student_entropy = shannon_entropy(softmax_vec(student.data));
    lambda = std::clamp(student_entropy / std::max(teacher_entropy, 1e-8), 0.0, 1.0);
  }

  int hard = 0;
  for (std::size_t i = 1; i < teacher_logits.size(); ++i)
    if (teacher_logits[i] > teacher_logits[static_cast<std::size_t>(hard)]) hard = static_cast<int>(i);

  const Tape::Var ce = tape.softmax_cross_entropy(student_logits, {hard});

  const double T = cfg.distill_temperature;
  std::vector<double> teacher_scaled = teacher_logits;
  for (double& v : teacher_scaled) v /= T;
  const Tape::Var teacher_soft = tape.constant(Tensor2::from_row(softmax_vec(teacher_scaled)));
  const Tape::Var student_soft = tape.softmax(tape.scale(student_logits, 1.0 / T));
  const Tape::Var dist = tape.scale(tape.kl_divergence(teacher_soft, student_soft), T * T);

  KdParts parts;
  parts.lambda = lambda;
  parts.ce = tape.value(ce).at(0, 0);
  parts.dist = tape.value(dist).at(0, 0);
  parts.total = tape.add(tape.scale(ce, lambda), tape.scale(dist, 1.0 - lambda));
  return parts;
}

LossParts explainer_loss_on_tape(Tape& tape, const CgnnModel& model, const CellGraph& graph,
                                 Tape::Var mask_logits_var, const Prediction& original,
                                 const ExplainerConfig& cfg,
                                 std::optional<double> fixed_lambda) {
  const Tape::Var sigma = tape.sigmoid(mask_logits_var);
  const ForwardVars fv = forward_on_tape(tape, model, graph, {{0, graph.num_nodes}}, sigma);
  const KdParts kd = kd_loss_on_tape(tape, fv.logits, original.logits, cfg, fixed_lambda);
  const Tape::Var size_term = tape.scale(tape.sum_all(sigma), cfg.alpha_mask);
  const Tape::Var entropy_term = tape.scale(tape.mean_binary_entropy(sigma), cfg.alpha_entropy);

  LossParts parts;
  parts.total = tape.add(tape.add(kd.total, size_term), entropy_term);
  parts.total_value = tape.value(parts.total).at(0, 0);
  parts.kd = tape.value(kd.total).at(0, 0);
  parts.size_term = tape.value(size_term).at(0, 0);
  parts.entropy_term = tape.value(entropy_term).at(0, 0);
  parts.lambda = kd.lambda;
  double sigma_sum = 0.0;
  const Tensor2& s = tape.value(sigma);
  for (double v : s.data) sigma_sum += v;
  parts.sigma_sum = sigma_sum;
  parts.midrange_frac = midrange_fraction(s.data);
  return parts;
}

std::vector<int> binarize_mask(const std::vector<double>& sigma, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("binarize_mask: threshold must be in (0,1)");
  std::vector<int> keep;
  for (std::size_t i = 0; i < sigma.size(); ++i)
    if (sigma[i] >= threshold) keep.push_back(static_cast<int>(i));
  return keep;
}

Explanation explain(const CgnnModel& model, const CellGraph& graph, const ExplainerConfig& cfg,
                    const std::string& roi_id) {
  Explanation out;
  out.roi_id = roi_id;
  out.original_prediction = predict(model, graph);

  std::vector<double> mask(static_cast<std::size_t>(graph.num_nodes), 0.0);
  if (cfg.mask_init == MaskInit::Normal) {
    Rng rng(cfg.seed);
    for (auto& m : mask) m = rng.normal(0.0, cfg.mask_init_stddev);
  }

  std::vector<Tensor2> params{Tensor2::from_col(mask)};
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam_state = AdamState::like(params);

  out.stop_reason = "max_iters";
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    Tape tape;
    const Tape::Var m = tape.leaf(params[0]);
    const LossParts parts = explainer_loss_on_tape(tape, model, graph, m, out.original_prediction, cfg);
    tape.backward(parts.total);

    out.trace.push_back({parts.total_value, parts.kd, parts.size_term, parts.entropy_term,
                         parts.sigma_sum, parts.midrange_frac});

    const Tensor2 before = params[0];
    adam_step(params, {tape.grad(m)}, adam_state, adam_cfg);

    // accept the iterate only if the binarized subgraph keeps the prediction
    const std::vector<double> cand_sigma = sigmoid_all(params[0].data);
    const std::vector<int> keep = binarized_keep(cand_sigma, cfg.binarize_threshold, nullptr);
    const SubgraphResult sub = extract_subgraph(graph, keep);
    const Prediction sub_pred = predict(model, sub.graph);
    if (sub_pred.predicted_class != out.original_prediction.predicted_class) {
      params[0] = before;
      out.stop_reason = "label_flip";
      break;
    }

    const int t = static_cast<int>(out.trace.size()) - 1;
    if (cfg.convergence_tol > 0.0 && t >= cfg.convergence_window) {
      const double ref = out.trace[static_cast<std::size_t>(t - cfg.convergence_window)].total;
      const double rel = std::abs(out.trace[static_cast<std::size_t>(t)].total - ref) /
                         std::max(1.0, std::abs(ref));
      if (rel < cfg.convergence_tol) {
        out.stop_reason = "converged";
        break;
      }
    }
  }

  out.mask.logits = params[0].data;
  out.mask.activation = sigmoid_all(out.mask.logits);
  out.kept_nodes = binarized_keep(out.mask.activation, cfg.binarize_threshold, &out.forced_nonempty);
  const SubgraphResult sub = extract_subgraph(graph, out.kept_nodes);
  out.subgraph = sub.graph;
  for (const auto& [u, v] : sub.graph.edges)
    out.kept_edges.emplace_back(sub.node_origin[static_cast<std::size_t>(u)],
                                sub.node_origin[static_cast<std::size_t>(v)]);
  out.explanation_prediction = predict(model, out.subgraph);
  return out;
}

CellGraph random_explanation(const CellGraph& graph, int n_nodes, int n_edges,
                             std::uint64_t seed) {
  if (n_nodes <= 0) throw std::invalid_argument("random_explanation: n_nodes must be > 0");
  if (n_edges < 0) throw std::invalid_argument("random_explanation: n_edges must be >= 0");
  n_nodes = std::min(n_nodes, graph.num_nodes);
  Rng rng(seed);
  std::vector<int> nodes = rng.sample_without_replacement(graph.num_nodes, n_nodes);
  SubgraphResult sub = extract_subgraph(graph, nodes);
  rng.shuffle(sub.graph.edges);
  const int take = std::min<int>(n_edges, static_cast<int>(sub.graph.edges.size()));
  sub.graph.edges.resize(static_cast<std::size_t>(take));
  std::sort(sub.graph.edges.begin(), sub.graph.edges.end());
  return sub.graph;
}

}  // namespace cgx
