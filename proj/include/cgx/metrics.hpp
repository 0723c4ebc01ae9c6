#pragma once

#include <string>
#include <vector>

#include "cgx/graph.hpp"
#include "cgx/model.hpp"

namespace cgx {

// Support-weighted multiclass F1; F1_c = 0 when precision + recall = 0.
double weighted_f1(const std::vector<int>& predictions, const std::vector<int>& labels);

struct ClassMeans {
  std::vector<double> per_class;
  std::vector<int> counts;
  double all = 0.0;
};

struct ReductionStats {
  ClassMeans node_pct;
  ClassMeans edge_pct;
};

// Node/edge reduction percentages per pair, averaged per class and overall.
// Originals with |E| = 0 count as 0% edge reduction.
ReductionStats reduction_stats(const std::vector<const CellGraph*>& originals,
                               const std::vector<const CellGraph*>& explanations,
                               const std::vector<int>& labels, int num_classes);

struct CeTriplet {
  ClassMeans original;
  ClassMeans explanation;
  ClassMeans random;
};

// Mean softmax cross-entropy of predicted logits against ground-truth labels
// for each graph variant, grouped by ground-truth class.
CeTriplet ce_report(const CgnnModel& model, const std::vector<const CellGraph*>& originals,
                    const std::vector<const CellGraph*>& explanations,
                    const std::vector<const CellGraph*>& randoms,
                    const std::vector<int>& labels, int num_classes);

struct PlantedRelevance {
  std::vector<double> precision;  // per RoI, same order as input
  std::vector<double> recall;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

PlantedRelevance planted_relevance(const std::vector<std::vector<int>>& kept_nodes,
                                   const std::vector<std::vector<int>>& planted);

struct EvalReport {
  std::vector<std::string> class_names;
  std::vector<double> f1_per_class;
  double f1_all = 0.0;
  ReductionStats reductions;
  CeTriplet ce;
  std::vector<int> sample_counts;
  bool has_planted = false;
  double planted_mean_precision = 0.0;
  double planted_mean_recall = 0.0;
};

std::string report_table(const EvalReport& report);
std::string report_json(const EvalReport& report);

}  // namespace cgx
