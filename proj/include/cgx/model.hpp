#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgx/autograd.hpp"
#include "cgx/dataset.hpp"
#include "cgx/graph.hpp"
#include "cgx/tensor.hpp"

namespace cgx {

enum class Readout { Mean, Sum };

struct CgnnConfig {
  int num_layers = 3;
  int hidden_dim = 32;
  int classifier_hidden = 64;
  Readout readout = Readout::Mean;
  double epsilon_gin = 0.0;  // GIN-0
  double lr = 1e-3;
  double weight_decay = 5e-4;
  bool coupled_decay = false;
  int batch_size = 16;
  int epochs = 100;
  std::uint64_t seed = 0;
};

// GIN encoder (num_layers × 2-layer MLP) + 2-layer MLP classifier head.
// Parameter order: per GIN layer W1, b1, W2, b2; then Wc1, bc1, Wc2, bc2.
struct CgnnModel {
  CgnnConfig cfg;
  GraphConfig graph_cfg;
  int input_dim = 0;
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<Tensor2> params;
  int epochs_run = 0;
  int best_epoch = -1;
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probs;
  int predicted_class = 0;  // argmax, ties to the lowest index

  static Prediction from_logits(const std::vector<double>& logits);
};

CgnnModel init_model(const CgnnConfig& cfg, const GraphConfig& graph_cfg, int input_dim,
                     int num_classes, std::vector<std::string> class_names);

struct ForwardVars {
  std::vector<Tape::Var> params;  // leaves in model parameter order
  Tape::Var logits = -1;          // B×C
};

// Masked forward pass. mask_sigma, when >= 0, is a |V|×1 tape variable of
// sigmoid mask activations used to scale the input node features.
ForwardVars forward_on_tape(Tape& tape, const CgnnModel& model, const CellGraph& graph,
                            const std::vector<std::pair<int, int>>& ranges,
                            Tape::Var mask_sigma = -1);

Prediction predict(const CgnnModel& model, const CellGraph& graph);

// Forward with explicit per-node mask logits (sigmoid applied internally).
Prediction predict_masked(const CgnnModel& model, const CellGraph& graph,
                          const std::vector<double>& mask_logits);

struct EpochStats {
  double train_loss = 0.0;
  double val_weighted_f1 = 0.0;
};

struct TrainResult {
  CgnnModel model;
  std::vector<EpochStats> history;
};

// Adam on mean softmax cross-entropy over shuffled disjoint-union batches.
// Returns the parameters of the best validation weighted-F1 epoch.
TrainResult train(const DatasetSplit& dataset, const CgnnConfig& cfg,
                  const GraphConfig& graph_cfg);

void save_model(const CgnnModel& model, const std::string& path);
CgnnModel load_model(const std::string& path);

}  // namespace cgx
