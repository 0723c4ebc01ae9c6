#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgx/autograd.hpp"
#include "cgx/graph.hpp"
#include "cgx/model.hpp"

namespace cgx {

enum class MaskInit { Zeros, Normal };

struct ExplainerConfig {
  double lr = 0.01;
  double alpha_mask = 0.005;
  double alpha_entropy = 0.1;
  int max_iters = 500;
  double convergence_tol = 1e-4;  // relative loss change over convergence_window
  int convergence_window = 10;
  MaskInit mask_init = MaskInit::Zeros;
  double mask_init_stddev = 0.1;
  double binarize_threshold = 0.5;
  double distill_temperature = 1.0;
  std::uint64_t seed = 0;
};

struct NodeMask {
  std::vector<double> logits;
  std::vector<double> activation;  // sigmoid(logits), elementwise
};

struct TracePoint {
  double total = 0.0;
  double kd = 0.0;
  double size_term = 0.0;     // alpha_mask · Σ σ(m)
  double entropy_term = 0.0;  // alpha_entropy · mean binary entropy
  double sigma_sum = 0.0;     // raw Σ σ(m)
  double midrange_frac = 0.0; // fraction of σ in [0.05, 0.95]
};

struct Explanation {
  std::string roi_id;
  NodeMask mask;
  std::vector<int> kept_nodes;  // original-graph indices, σ >= threshold
  std::vector<Edge> kept_edges; // induced edges, original-graph indices
  CellGraph subgraph;
  std::string stop_reason;  // converged | label_flip | max_iters
  bool forced_nonempty = false;
  std::vector<TracePoint> trace;
  Prediction original_prediction;
  Prediction explanation_prediction;
};

struct KdParts {
  Tape::Var total = -1;
  double lambda = 0.0;
  double ce = 0.0;
  double dist = 0.0;
};

// λ·CE(student, argmax teacher) + (1−λ)·KL(softmax(teacher/T) ‖ softmax(student/T))·T²
// with λ = clamp(H(softmax(student)) / max(H(softmax(teacher)), 1e-8), 0, 1),
// held constant in the gradient. fixed_lambda pins λ for finite-difference checks.
KdParts kd_loss_on_tape(Tape& tape, Tape::Var student_logits,
                        const std::vector<double>& teacher_logits, const ExplainerConfig& cfg,
                        std::optional<double> fixed_lambda = std::nullopt);

struct LossParts {
  Tape::Var total = -1;
  double total_value = 0.0;
  double kd = 0.0;
  double size_term = 0.0;
  double entropy_term = 0.0;
  double lambda = 0.0;
  double sigma_sum = 0.0;
  double midrange_frac = 0.0;
};

// Full explainer objective on the tape; mask_logits_var must be |V|×1.
LossParts explainer_loss_on_tape(Tape& tape, const CgnnModel& model, const CellGraph& graph,
                                 Tape::Var mask_logits_var, const Prediction& original,
                                 const ExplainerConfig& cfg,
                                 std::optional<double> fixed_lambda = std::nullopt);

// {i : σ(m_i) >= threshold}; ascending order
std::vector<int> binarize_mask(const std::vector<double>& sigma, double threshold);

// Adam on the node mask with label-flip early stopping on the binarized
// subgraph. The returned iterate always yields the original predicted class.
Explanation explain(const CgnnModel& model, const CellGraph& graph, const ExplainerConfig& cfg,
                    const std::string& roi_id = "");

// Size-matched random baseline: n_nodes uniform without replacement (clamped
// to the graph size), then up to n_edges uniform among the induced edges.
CellGraph random_explanation(const CellGraph& graph, int n_nodes, int n_edges,
                             std::uint64_t seed);

}  // namespace cgx
