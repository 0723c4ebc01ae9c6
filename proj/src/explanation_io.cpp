#include "cgx/explanation_io.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace cgx {

namespace {
using nlohmann::json;
}

void write_explanation(const Explanation& expl, const std::string& path) {
  json j;
  j["roi_id"] = expl.roi_id;
  j["mask_logits"] = expl.mask.logits;
  j["sigmoid"] = expl.mask.activation;
  j["kept_nodes"] = expl.kept_nodes;
  json edges = json::array();
  for (const auto& [u, v] : expl.kept_edges) edges.push_back({u, v});
  j["kept_edges"] = std::move(edges);
  j["stop_reason"] = expl.stop_reason;
  j["forced_nonempty"] = expl.forced_nonempty;
  j["predicted_class"] = expl.explanation_prediction.predicted_class;
  j["original_logits"] = expl.original_prediction.logits;
  j["explanation_logits"] = expl.explanation_prediction.logits;
  std::vector<double> totals, kd, size_term, entropy_term, sigma_sum, midrange;
  for (const auto& tp : expl.trace) {
    totals.push_back(tp.total);
    kd.push_back(tp.kd);
    size_term.push_back(tp.size_term);
    entropy_term.push_back(tp.entropy_term);
    sigma_sum.push_back(tp.sigma_sum);
    midrange.push_back(tp.midrange_frac);
  }
  j["loss_trace"] = totals;
  j["trace_kd"] = kd;
  j["trace_size"] = size_term;
  j["trace_entropy"] = entropy_term;
  j["trace_sigma_sum"] = sigma_sum;
  j["trace_midrange_frac"] = midrange;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_explanation: cannot write " + path);
  out << j.dump(2) << "\n";
}

Explanation read_explanation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_explanation: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("read_explanation: parse failure in " + path + ": " + e.what());
  }
  Explanation e;
  e.roi_id = j.at("roi_id").get<std::string>();
  e.mask.logits = j.at("mask_logits").get<std::vector<double>>();
  e.mask.activation = j.at("sigmoid").get<std::vector<double>>();
  if (e.mask.logits.size() != e.mask.activation.size())
    throw std::runtime_error("read_explanation: mask length mismatch in " + path);
  e.kept_nodes = j.at("kept_nodes").get<std::vector<int>>();
  const int num_nodes = static_cast<int>(e.mask.logits.size());
  for (int k : e.kept_nodes)
    if (k < 0 || k >= num_nodes)
      throw std::runtime_error("read_explanation: kept node index out of range in " + path);
  for (const auto& ej : j.at("kept_edges")) {
    const int u = ej.at(0).get<int>();
    const int v = ej.at(1).get<int>();
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw std::runtime_error("read_explanation: kept edge index out of range in " + path);
    e.kept_edges.emplace_back(u, v);
  }
  e.stop_reason = j.at("stop_reason").get<std::string>();
  if (e.stop_reason != "converged" && e.stop_reason != "label_flip" && e.stop_reason != "max_iters")
    throw std::runtime_error("read_explanation: unknown stop_reason in " + path);
  e.forced_nonempty = j.value("forced_nonempty", false);
  const auto totals = j.at("loss_trace").get<std::vector<double>>();
  const auto kd = j.value("trace_kd", std::vector<double>(totals.size(), 0.0));
  const auto size_term = j.value("trace_size", std::vector<double>(totals.size(), 0.0));
  const auto entropy_term = j.value("trace_entropy", std::vector<double>(totals.size(), 0.0));
  const auto sigma_sum = j.value("trace_sigma_sum", std::vector<double>(totals.size(), 0.0));
  const auto midrange = j.value("trace_midrange_frac", std::vector<double>(totals.size(), 0.0));
  for (std::size_t i = 0; i < totals.size(); ++i)
    e.trace.push_back({totals[i], kd[i], size_term[i], entropy_term[i], sigma_sum[i], midrange[i]});
  e.original_prediction = Prediction::from_logits(j.at("original_logits").get<std::vector<double>>());
  e.explanation_prediction =
      Prediction::from_logits(j.at("explanation_logits").get<std::vector<double>>());
  return e;
}

void write_overlay(const Explanation& expl, const CellGraph& graph, const std::string& path) {
  json j;
  j["roi_id"] = expl.roi_id;
  json nodes = json::array();
  for (int idx : expl.kept_nodes) {
    nodes.push_back({{"index", idx},
                     {"x", graph.centroids_px.at(idx, 0)},
                     {"y", graph.centroids_px.at(idx, 1)},
                     {"sigma", expl.mask.activation[static_cast<std::size_t>(idx)]}});
  }
  j["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const auto& [u, v] : expl.kept_edges) edges.push_back({u, v});
  j["edges"] = std::move(edges);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_overlay: cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace cgx
