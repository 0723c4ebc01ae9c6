#include <cmath>
#include <map>

#include "cgx/explainer.hpp"
#include "cgx/metrics.hpp"
#include "cgx/rng.hpp"
#include "doctest.h"

using namespace cgx;

namespace {

// confusion-matrix reference computed with plain maps
double oracle_weighted_f1(const std::vector<int>& pred, const std::vector<int>& label) {
  std::map<int, int> support;
  std::map<std::pair<int, int>, int> confusion;
  int max_c = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    support[label[i]]++;
    confusion[{label[i], pred[i]}]++;
    max_c = std::max({max_c, pred[i], label[i]});
  }
  double total = 0.0;
  for (int c = 0; c <= max_c; ++c) {
    int tp = confusion[{c, c}];
    int fp = 0, fn = 0;
    for (int o = 0; o <= max_c; ++o) {
      if (o == c) continue;
      fp += confusion[{o, c}];
      fn += confusion[{c, o}];
    }
    const double denom = 2.0 * tp + fp + fn;
    const double f1 = denom > 0.0 ? 2.0 * tp / denom : 0.0;
    total += f1 * support[c];
  }
  return total / static_cast<double>(pred.size());
}

CellGraph chain_graph(int nodes, int dim) {
  CellGraph g;
  g.num_nodes = nodes;
  g.node_features = Tensor2(nodes, dim);
  g.centroids_px = Tensor2(nodes, 2);
  for (int i = 0; i + 1 < nodes; ++i) g.edges.push_back({i, i + 1});
  return g;
}

}  // namespace

TEST_CASE("weighted_f1 worked examples") {
  CHECK(weighted_f1({0, 1, 2}, {0, 1, 2}) == doctest::Approx(1.0));
  CHECK(weighted_f1({1, 0}, {0, 1}) == doctest::Approx(0.0));

  // labels {0,1,1}, predictions {0,0,1}:
  // class 0: p=1/2, r=1, f1=2/3; class 1: p=1, r=1/2, f1=2/3
  // weighted: (1·2/3 + 2·2/3)/3 = 2/3
  CHECK(weighted_f1({0, 0, 1}, {0, 1, 1}) == doctest::Approx(2.0 / 3.0));

  CHECK_THROWS_AS(weighted_f1({0}, {0, 1}), std::invalid_argument);
  CHECK_THROWS_AS(weighted_f1({}, {}), std::invalid_argument);
}

TEST_CASE("weighted_f1 matches the confusion-matrix oracle on random inputs") {
  Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(1, 60);
    const int c = rng.uniform_int(2, 5);
    std::vector<int> pred(static_cast<std::size_t>(n)), label(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      pred[static_cast<std::size_t>(i)] = rng.uniform_int(0, c - 1);
      label[static_cast<std::size_t>(i)] = rng.uniform_int(0, c - 1);
    }
    CHECK(weighted_f1(pred, label) == doctest::Approx(oracle_weighted_f1(pred, label)).epsilon(1e-12));
  }
}

TEST_CASE("reduction_stats arithmetic") {
  const CellGraph a = chain_graph(10, 2);  // 9 edges
  const CellGraph ea = chain_graph(4, 2);  // 3 edges
  const CellGraph b = chain_graph(8, 2);   // 7 edges
  const CellGraph eb = chain_graph(8, 2);  // identity

  const ReductionStats s = reduction_stats({&a, &b}, {&ea, &eb}, {0, 1}, 2);
  CHECK(s.node_pct.per_class[0] == doctest::Approx(100.0 * 6.0 / 10.0));
  CHECK(s.edge_pct.per_class[0] == doctest::Approx(100.0 * 6.0 / 9.0));
  CHECK(s.node_pct.per_class[1] == doctest::Approx(0.0));
  CHECK(s.edge_pct.per_class[1] == doctest::Approx(0.0));
  CHECK(s.node_pct.all == doctest::Approx(0.5 * (60.0 + 0.0)));

  // edgeless original counts as zero edge reduction
  CellGraph lone = chain_graph(1, 2);
  const ReductionStats z = reduction_stats({&lone}, {&lone}, {0}, 1);
  CHECK(z.edge_pct.per_class[0] == doctest::Approx(0.0));
}

TEST_CASE("ce_report on a constant-logit model") {
  // all-zero parameters -> uniform logits -> CE = ln C for every variant
  CgnnConfig cfg;
  CgnnModel m = init_model(cfg, GraphConfig{}, 4, 3, {"a", "b", "c"});
  for (auto& p : m.params)
    for (auto& v : p.data) v = 0.0;

  const CellGraph g1 = chain_graph(6, 4);
  const CellGraph g2 = chain_graph(3, 4);
  const CeTriplet ce = ce_report(m, {&g1, &g2}, {&g2, &g2}, {&g1, &g1}, {0, 2}, 3);
  for (const ClassMeans* cm : {&ce.original, &ce.explanation, &ce.random}) {
    CHECK(cm->all == doctest::Approx(std::log(3.0)).epsilon(1e-9));
    CHECK(cm->per_class[0] == doctest::Approx(std::log(3.0)).epsilon(1e-9));
    CHECK(cm->counts[1] == 0);
  }
}

TEST_CASE("planted_relevance") {
  SUBCASE("exact and disjoint overlap") {
    const PlantedRelevance r =
        planted_relevance({{1, 2, 3}, {0, 5}, {1, 2}}, {{1, 2, 3}, {7, 8}, {2, 3, 4, 5}});
    CHECK(r.precision[0] == doctest::Approx(1.0));
    CHECK(r.recall[0] == doctest::Approx(1.0));
    CHECK(r.precision[1] == doctest::Approx(0.0));
    CHECK(r.recall[1] == doctest::Approx(0.0));
    CHECK(r.precision[2] == doctest::Approx(0.5));
    CHECK(r.recall[2] == doctest::Approx(0.25));
    CHECK(r.mean_recall == doctest::Approx((1.0 + 0.0 + 0.25) / 3.0));
  }

  SUBCASE("empty planted set rejected") {
    CHECK_THROWS_AS(planted_relevance({{0}}, {{}}), std::invalid_argument);
  }

  SUBCASE("random subsets recover the hypergeometric mean recall") {
    // keep 10 of 30 nodes at random with 6 planted: E[recall] = 1/3
    const int n = 30, keep = 10, planted_n = 6, trials = 2000;
    CellGraph g = chain_graph(n, 2);
    for (int i = 0; i < n; ++i) g.centroids_px.at(i, 0) = i;
    std::vector<std::vector<int>> kept, planted;
    for (int t = 0; t < trials; ++t) {
      const CellGraph r = random_explanation(g, keep, 0, static_cast<std::uint64_t>(t) + 100);
      std::vector<int> ks;
      for (int i = 0; i < r.num_nodes; ++i)
        ks.push_back(static_cast<int>(r.centroids_px.at(i, 0)));
      kept.push_back(std::move(ks));
      planted.push_back({0, 1, 2, 3, 4, 5});
      (void)planted_n;
    }
    const PlantedRelevance r = planted_relevance(kept, planted);
    const double p = static_cast<double>(keep) / n;
    // per-trial recall variance is bounded by p(1-p)/planted_n; 3 sigma of the mean
    const double sd = std::sqrt(p * (1 - p) / planted_n / trials);
    CHECK(std::abs(r.mean_recall - p) < 3.5 * sd);
  }
}

TEST_CASE("report formatting carries every metric") {
  EvalReport rep;
  rep.class_names = {"benign", "malignant"};
  rep.f1_per_class = {0.9, 0.8};
  rep.f1_all = 0.85;
  rep.reductions.node_pct = {{10.0, 20.0}, {5, 5}, 15.0};
  rep.reductions.edge_pct = {{30.0, 40.0}, {5, 5}, 35.0};
  rep.ce.original = {{0.1, 0.2}, {5, 5}, 0.15};
  rep.ce.explanation = {{0.11, 0.21}, {5, 5}, 0.16};
  rep.ce.random = {{0.5, 0.6}, {5, 5}, 0.55};
  rep.sample_counts = {5, 5};

  const std::string table = report_table(rep);
  for (const char* token : {"benign", "malignant", "All", "Weighted F1", "Node reduction",
                            "Edge reduction", "Original CE", "Explanation CE", "Random CE"})
    CHECK(table.find(token) != std::string::npos);

  const std::string json = report_json(rep);
  CHECK(json.find("\"weighted_f1\"") != std::string::npos);
  CHECK(json.find("0.85") != std::string::npos);
}
