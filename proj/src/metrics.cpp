#include "cgx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cgx/autograd.hpp"
#include "json.hpp"

namespace cgx {

namespace {

ClassMeans finalize(std::vector<double> sums, std::vector<int> counts) {
  ClassMeans cm;
  cm.counts = counts;
  double total = 0.0;
  int n = 0;
  for (std::size_t c = 0; c < sums.size(); ++c) {
    total += sums[c];
    n += counts[c];
    cm.per_class.push_back(counts[c] > 0 ? sums[c] / counts[c] : 0.0);
  }
  cm.all = n > 0 ? total / n : 0.0;
  return cm;
}

double ce_against_label(const Prediction& pred, int label) {
  // stable: logsumexp(l) − l[label]
  double mx = pred.logits[0];
  for (double v : pred.logits) mx = std::max(mx, v);
  double denom = 0.0;
  for (double v : pred.logits) denom += std::exp(v - mx);
  return mx + std::log(denom) - pred.logits[static_cast<std::size_t>(label)];
}

}  // namespace

double weighted_f1(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size())
    throw std::invalid_argument("weighted_f1: empty or mismatched input");
  int num_classes = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    num_classes = std::max({num_classes, labels[i] + 1, predictions[i] + 1});
  std::vector<int> tp(static_cast<std::size_t>(num_classes), 0);
  std::vector<int> fp(static_cast<std::size_t>(num_classes), 0);
  std::vector<int> fn(static_cast<std::size_t>(num_classes), 0);
  std::vector<int> support(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    support[static_cast<std::size_t>(labels[i])] += 1;
    if (predictions[i] == labels[i]) {
      tp[static_cast<std::size_t>(labels[i])] += 1;
    } else {
      fp[static_cast<std::size_t>(predictions[i])] += 1;
      fn[static_cast<std::size_t>(labels[i])] += 1;
    }
  }
  double score = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const double denom_p = tp[static_cast<std::size_t>(c)] + fp[static_cast<std::size_t>(c)];
    const double denom_r = tp[static_cast<std::size_t>(c)] + fn[static_cast<std::size_t>(c)];
    const double prec = denom_p > 0 ? tp[static_cast<std::size_t>(c)] / denom_p : 0.0;
    const double rec = denom_r > 0 ? tp[static_cast<std::size_t>(c)] / denom_r : 0.0;
    const double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    score += f1 * support[static_cast<std::size_t>(c)] / static_cast<double>(labels.size());
  }
  return score;
}

ReductionStats reduction_stats(const std::vector<const CellGraph*>& originals,
                               const std::vector<const CellGraph*>& explanations,
                               const std::vector<int>& labels, int num_classes) {
  if (originals.size() != explanations.size() || originals.size() != labels.size())
    throw std::invalid_argument("reduction_stats: size mismatch");
  std::vector<double> node_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> edge_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const CellGraph* g = originals[i];
    const CellGraph* s = explanations[i];
    if (s->num_nodes > g->num_nodes)
      throw std::invalid_argument("reduction_stats: explanation larger than original");
    const double node_red = 100.0 * (1.0 - static_cast<double>(s->num_nodes) / g->num_nodes);
    const double edge_red =
        g->num_edges() == 0 ? 0.0
                            : 100.0 * (1.0 - static_cast<double>(s->num_edges()) / g->num_edges());
    const auto c = static_cast<std::size_t>(labels[i]);
    node_sum[c] += node_red;
    edge_sum[c] += edge_red;
    counts[c] += 1;
  }
  ReductionStats rs;
  rs.node_pct = finalize(node_sum, counts);
  rs.edge_pct = finalize(edge_sum, counts);
  return rs;
}

CeTriplet ce_report(const CgnnModel& model, const std::vector<const CellGraph*>& originals,
                    const std::vector<const CellGraph*>& explanations,
                    const std::vector<const CellGraph*>& randoms,
                    const std::vector<int>& labels, int num_classes) {
  if (originals.size() != explanations.size() || originals.size() != randoms.size() ||
      originals.size() != labels.size())
    throw std::invalid_argument("ce_report: size mismatch");
  std::vector<double> orig_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> expl_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<double> rand_sum(static_cast<std::size_t>(num_classes), 0.0);
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const auto c = static_cast<std::size_t>(labels[i]);
    orig_sum[c] += ce_against_label(predict(model, *originals[i]), labels[i]);
    expl_sum[c] += ce_against_label(predict(model, *explanations[i]), labels[i]);
    rand_sum[c] += ce_against_label(predict(model, *randoms[i]), labels[i]);
    counts[c] += 1;
  }
  CeTriplet t;
  t.original = finalize(orig_sum, counts);
  t.explanation = finalize(expl_sum, counts);
  t.random = finalize(rand_sum, counts);
  return t;
}

PlantedRelevance planted_relevance(const std::vector<std::vector<int>>& kept_nodes,
                                   const std::vector<std::vector<int>>& planted) {
  if (kept_nodes.size() != planted.size() || kept_nodes.empty())
    throw std::invalid_argument("planted_relevance: missing planted sets");
  PlantedRelevance pr;
  for (std::size_t i = 0; i < kept_nodes.size(); ++i) {
    if (planted[i].empty())
      throw std::invalid_argument("planted_relevance: empty planted set at index " +
                                  std::to_string(i));
    const std::set<int> planted_set(planted[i].begin(), planted[i].end());
    int hits = 0;
    for (int k : kept_nodes[i]) hits += planted_set.count(k) ? 1 : 0;
    const double prec = kept_nodes[i].empty() ? 0.0 : static_cast<double>(hits) / kept_nodes[i].size();
    const double rec = static_cast<double>(hits) / planted_set.size();
    pr.precision.push_back(prec);
    pr.recall.push_back(rec);
    pr.mean_precision += prec;
    pr.mean_recall += rec;
  }
  pr.mean_precision /= static_cast<double>(kept_nodes.size());
  pr.mean_recall /= static_cast<double>(kept_nodes.size());
  return pr;
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  const auto row = [&](const std::string& name, const std::vector<double>& vals, double all) {
    os << name;
    for (std::size_t i = name.size(); i < 24; ++i) os << ' ';
    char buf[32];
    for (double v : vals) {
      std::snprintf(buf, sizeof(buf), "%10.3f", v);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%10.3f", all);
    os << buf << "\n";
  };
  os << "Metric/Class            ";
  for (const auto& name : r.class_names) {
    std::string col = name;
    if (col.size() > 9) col = col.substr(0, 9);
    for (std::size_t i = col.size(); i < 10; ++i) os << ' ';
    os << col;
  }
  os << "       All\n";
  row("Weighted F1", r.f1_per_class, r.f1_all);
  row("Node reduction (%)", r.reductions.node_pct.per_class, r.reductions.node_pct.all);
  row("Edge reduction (%)", r.reductions.edge_pct.per_class, r.reductions.edge_pct.all);
  row("Original CE", r.ce.original.per_class, r.ce.original.all);
  row("Explanation CE", r.ce.explanation.per_class, r.ce.explanation.all);
  row("Random CE", r.ce.random.per_class, r.ce.random.all);
  return os.str();
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["class_names"] = r.class_names;
  j["weighted_f1"] = {{"per_class", r.f1_per_class}, {"all", r.f1_all}};
  j["node_reduction_pct"] = {{"per_class", r.reductions.node_pct.per_class},
                             {"all", r.reductions.node_pct.all}};
  j["edge_reduction_pct"] = {{"per_class", r.reductions.edge_pct.per_class},
                             {"all", r.reductions.edge_pct.all}};
  j["ce"] = {{"original", {{"per_class", r.ce.original.per_class}, {"all", r.ce.original.all}}},
             {"explanation",
              {{"per_class", r.ce.explanation.per_class}, {"all", r.ce.explanation.all}}},
             {"random", {{"per_class", r.ce.random.per_class}, {"all", r.ce.random.all}}}};
  j["sample_counts"] = r.sample_counts;
  if (r.has_planted) {
    j["planted_relevance"] = {{"mean_precision", r.planted_mean_precision},
                              {"mean_recall", r.planted_mean_recall}};
  }
  return j.dump(2);
}

}  // namespace cgx
