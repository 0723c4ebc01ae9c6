#include "cgx/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cgx/adam.hpp"
#include "cgx/metrics.hpp"
#include "cgx/rng.hpp"
#include "json.hpp"

namespace cgx {

namespace {

using nlohmann::json;

Tensor2 glorot(Rng& rng, int rows, int cols) {
  Tensor2 t(rows, cols);
  const double bound = std::sqrt(6.0 / (rows + cols));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

Prediction Prediction::from_logits(const std::vector<double>& logits) {
  Prediction p;
  p.logits = logits;
  p.probs = softmax_vec(logits);
  p.predicted_class = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[static_cast<std::size_t>(p.predicted_class)])
      p.predicted_class = static_cast<int>(i);
  return p;
}

CgnnModel init_model(const CgnnConfig& cfg, const GraphConfig& graph_cfg, int input_dim,
                     int num_classes, std::vector<std::string> class_names) {
  if (input_dim < 1 || num_classes < 2) throw std::invalid_argument("init_model: bad dimensions");
  CgnnModel m;
  m.cfg = cfg;
  m.graph_cfg = graph_cfg;
  m.input_dim = input_dim;
  m.num_classes = num_classes;
  m.class_names = std::move(class_names);
  Rng rng(cfg.seed);
  int in = input_dim;
  for (int l = 0; l < cfg.num_layers; ++l) {
    m.params.push_back(glorot(rng, in, cfg.hidden_dim));
    m.params.emplace_back(1, cfg.hidden_dim, 0.0);
    m.params.push_back(glorot(rng, cfg.hidden_dim, cfg.hidden_dim));
    m.params.emplace_back(1, cfg.hidden_dim, 0.0);
    in = cfg.hidden_dim;
  }
  m.params.push_back(glorot(rng, cfg.hidden_dim, cfg.classifier_hidden));
  m.params.emplace_back(1, cfg.classifier_hidden, 0.0);
  m.params.push_back(glorot(rng, cfg.classifier_hidden, num_classes));
  m.params.emplace_back(1, num_classes, 0.0);
  return m;
}

ForwardVars forward_on_tape(Tape& tape, const CgnnModel& model, const CellGraph& graph,
                            const std::vector<std::pair<int, int>>& ranges,
                            Tape::Var mask_sigma) {
  if (graph.node_features.cols != model.input_dim)
    throw std::invalid_argument("forward: feature dimension mismatch");
  ForwardVars fv;
  for (const auto& p : model.params) fv.params.push_back(tape.leaf(p));

  const auto nbrs = graph.neighbor_lists();
  Tape::Var h = tape.constant(graph.node_features);
  if (mask_sigma >= 0) h = tape.row_scale(h, mask_sigma);

  for (int l = 0; l < model.cfg.num_layers; ++l) {
    const Tape::Var w1 = fv.params[static_cast<std::size_t>(4 * l)];
    const Tape::Var b1 = fv.params[static_cast<std::size_t>(4 * l + 1)];
    const Tape::Var w2 = fv.params[static_cast<std::size_t>(4 * l + 2)];
    const Tape::Var b2 = fv.params[static_cast<std::size_t>(4 * l + 3)];
    const Tape::Var agg =
        tape.add(tape.scale(h, 1.0 + model.cfg.epsilon_gin), tape.neighbor_sum(h, nbrs));
    const Tape::Var mid = tape.relu(tape.add_bias(tape.matmul(agg, w1), b1));
    h = tape.relu(tape.add_bias(tape.matmul(mid, w2), b2));
  }

  const Tape::Var readout = model.cfg.readout == Readout::Mean
                                ? tape.range_mean_rows(h, ranges)
                                : tape.range_sum_rows(h, ranges);
  const std::size_t cbase = static_cast<std::size_t>(4 * model.cfg.num_layers);
  const Tape::Var hid = tape.relu(
      tape.add_bias(tape.matmul(readout, fv.params[cbase]), fv.params[cbase + 1]));
  fv.logits = tape.add_bias(tape.matmul(hid, fv.params[cbase + 2]), fv.params[cbase + 3]);
  return fv;
}

Prediction predict(const CgnnModel& model, const CellGraph& graph) {
  Tape tape;
  const auto fv = forward_on_tape(tape, model, graph, {{0, graph.num_nodes}});
  const Tensor2& logits = tape.value(fv.logits);
  return Prediction::from_logits(logits.data);
}

Prediction predict_masked(const CgnnModel& model, const CellGraph& graph,
                          const std::vector<double>& mask_logits) {
  if (static_cast<int>(mask_logits.size()) != graph.num_nodes)
    throw std::invalid_argument("predict_masked: mask length mismatch");
  Tape tape;
  const Tape::Var m = tape.leaf(Tensor2::from_col(mask_logits));
  const Tape::Var s = tape.sigmoid(m);
  const auto fv = forward_on_tape(tape, model, graph, {{0, graph.num_nodes}}, s);
  return Prediction::from_logits(tape.value(fv.logits).data);
}

TrainResult train(const DatasetSplit& dataset, const CgnnConfig& cfg,
                  const GraphConfig& graph_cfg) {
  if (dataset.train.empty()) throw std::invalid_argument("train: empty train split");

  std::vector<CellGraph> train_graphs, val_graphs;
  std::vector<int> train_labels, val_labels;
  for (const auto& roi : dataset.train) {
    train_graphs.push_back(build_cell_graph(roi.nuclei, roi.image_w, roi.image_h, graph_cfg));
    train_labels.push_back(roi.label);
  }
  for (const auto& roi : dataset.val) {
    val_graphs.push_back(build_cell_graph(roi.nuclei, roi.image_w, roi.image_h, graph_cfg));
    val_labels.push_back(roi.label);
  }

  const int input_dim = train_graphs.front().node_features.cols;
  CgnnModel model =
      init_model(cfg, graph_cfg, input_dim, dataset.num_classes(), dataset.class_names);

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;
  adam_cfg.coupled_decay = cfg.coupled_decay;
  AdamState adam_state = AdamState::like(model.params);

  Rng shuffle_rng(cfg.seed ^ 0x5b5ad4f1e3c2d101ULL);
  std::vector<int> order(train_graphs.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  std::vector<Tensor2> best_params = model.params;
  double best_f1 = -1.0;
  int best_epoch = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const CellGraph*> batch;
      std::vector<int> targets;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&train_graphs[static_cast<std::size_t>(order[i])]);
        targets.push_back(train_labels[static_cast<std::size_t>(order[i])]);
      }
      const BatchedGraph bg = disjoint_union(batch);
      Tape tape;
      const ForwardVars fv = forward_on_tape(tape, model, bg.graph, bg.ranges);
      const Tape::Var loss = tape.softmax_cross_entropy(fv.logits, targets);
      const double loss_val = tape.value(loss).at(0, 0);
      if (!std::isfinite(loss_val))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      std::vector<Tensor2> grads;
      grads.reserve(fv.params.size());
      for (Tape::Var p : fv.params) grads.push_back(tape.grad(p));
      adam_step(model.params, grads, adam_state, adam_cfg);
      epoch_loss += loss_val;
      ++batches;
    }

    EpochStats stats;
    stats.train_loss = epoch_loss / std::max(1, batches);
    if (!val_graphs.empty()) {
      std::vector<int> preds;
      for (const auto& g : val_graphs) preds.push_back(predict(model, g).predicted_class);
      stats.val_weighted_f1 = weighted_f1(preds, val_labels);
      if (stats.val_weighted_f1 > best_f1) {
        best_f1 = stats.val_weighted_f1;
        best_params = model.params;
        best_epoch = epoch;
      }
    } else {
      best_params = model.params;
      best_epoch = epoch;
    }
    result.history.push_back(stats);
  }

  model.params = std::move(best_params);
  model.epochs_run = cfg.epochs;
  model.best_epoch = best_epoch;
  result.model = std::move(model);
  return result;
}

void save_model(const CgnnModel& model, const std::string& path) {
  json j;
  j["config"] = {{"num_layers", model.cfg.num_layers},
                 {"hidden_dim", model.cfg.hidden_dim},
                 {"classifier_hidden", model.cfg.classifier_hidden},
                 {"readout", model.cfg.readout == Readout::Mean ? "mean" : "sum"},
                 {"epsilon_gin", model.cfg.epsilon_gin},
                 {"lr", model.cfg.lr},
                 {"weight_decay", model.cfg.weight_decay},
                 {"coupled_decay", model.cfg.coupled_decay},
                 {"batch_size", model.cfg.batch_size},
                 {"epochs", model.cfg.epochs},
                 {"seed", model.cfg.seed}};
  j["graph_config"] = {{"k", model.graph_cfg.k},
                       {"max_edge_px", model.graph_cfg.max_edge_px},
                       {"mutual", model.graph_cfg.mutual}};
  j["input_dim"] = model.input_dim;
  j["num_classes"] = model.num_classes;
  j["class_names"] = model.class_names;
  j["epochs_run"] = model.epochs_run;
  j["best_epoch"] = model.best_epoch;
  json params = json::array();
  for (const auto& p : model.params)
    params.push_back({{"rows", p.rows}, {"cols", p.cols}, {"data", p.data}});
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_model: cannot write " + path);
  out << j.dump(2) << "\n";
}

CgnnModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  json j;
  in >> j;
  CgnnModel m;
  const json& c = j.at("config");
  m.cfg.num_layers = c.at("num_layers").get<int>();
  m.cfg.hidden_dim = c.at("hidden_dim").get<int>();
  m.cfg.classifier_hidden = c.at("classifier_hidden").get<int>();
  m.cfg.readout = c.at("readout").get<std::string>() == "sum" ? Readout::Sum : Readout::Mean;
  m.cfg.epsilon_gin = c.at("epsilon_gin").get<double>();
  m.cfg.lr = c.at("lr").get<double>();
  m.cfg.weight_decay = c.at("weight_decay").get<double>();
  m.cfg.coupled_decay = c.at("coupled_decay").get<bool>();
  m.cfg.batch_size = c.at("batch_size").get<int>();
  m.cfg.epochs = c.at("epochs").get<int>();
  m.cfg.seed = c.at("seed").get<std::uint64_t>();
  const json& gc = j.at("graph_config");
  m.graph_cfg.k = gc.at("k").get<int>();
  m.graph_cfg.max_edge_px = gc.at("max_edge_px").get<double>();
  m.graph_cfg.mutual = gc.at("mutual").get<bool>();
  m.input_dim = j.at("input_dim").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.epochs_run = j.at("epochs_run").get<int>();
  m.best_epoch = j.at("best_epoch").get<int>();
  for (const auto& pj : j.at("params")) {
    Tensor2 t(pj.at("rows").get<int>(), pj.at("cols").get<int>());
    t.data = pj.at("data").get<std::vector<double>>();
    if (static_cast<int>(t.data.size()) != t.size())
      throw std::runtime_error("load_model: parameter size mismatch");
    m.params.push_back(std::move(t));
  }
  return m;
}

}  // namespace cgx
