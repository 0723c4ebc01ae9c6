#include <cmath>
#include <filesystem>

#include "cgx/model.hpp"
#include "cgx/rng.hpp"
#include "doctest.h"

using namespace cgx;

namespace {

CellGraph random_graph(Rng& rng, int nodes, int feature_dim) {
  std::vector<NucleusRecord> nuclei;
  for (int i = 0; i < nodes; ++i) {
    std::vector<double> f(static_cast<std::size_t>(feature_dim));
    for (auto& v : f) v = rng.uniform(-1.0, 1.0);
    nuclei.push_back({rng.uniform(0.0, 150.0), rng.uniform(0.0, 150.0), std::move(f)});
  }
  GraphConfig gc;
  gc.k = 3;
  return build_cell_graph(nuclei, 150.0, 150.0, gc);
}

// identity GIN layer: W = I, b = 0, inputs kept non-negative so ReLU is a no-op
CgnnModel identity_layer_model(int dim) {
  CgnnConfig cfg;
  cfg.num_layers = 1;
  cfg.hidden_dim = dim;
  cfg.classifier_hidden = 4;
  CgnnModel m = init_model(cfg, GraphConfig{}, dim, 2, {"a", "b"});
  for (int t = 0; t < 4; ++t) {
    Tensor2& p = m.params[static_cast<std::size_t>(t)];
    for (auto& v : p.data) v = 0.0;
    if (t == 0 || t == 2)
      for (int i = 0; i < dim; ++i) p.at(i, i) = 1.0;
  }
  return m;
}

}  // namespace

TEST_CASE("gin layer aggregation") {
  SUBCASE("triangle with identity MLP sums each node with its neighbors") {
    const int dim = 3;
    CgnnModel m = identity_layer_model(dim);
    CellGraph tri;
    tri.num_nodes = 3;
    tri.edges = {{0, 1}, {0, 2}, {1, 2}};
    tri.node_features = Tensor2(3, dim);
    tri.centroids_px = Tensor2(3, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < dim; ++j) tri.node_features.at(i, j) = 0.1 * (i + 1) + 0.01 * j;

    Tape tape;
    // probe just the encoder output: run the forward and read the hidden state
    // via a single-layer model whose classifier is irrelevant here
    const auto nbrs = tri.neighbor_lists();
    const Tape::Var h0 = tape.constant(tri.node_features);
    const Tape::Var agg = tape.add(tape.scale(h0, 1.0), tape.neighbor_sum(h0, nbrs));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < dim; ++j) {
        double expected = 0.0;
        for (int v = 0; v < 3; ++v) expected += tri.node_features.at(v, j);
        CHECK(tape.value(agg).at(i, j) == doctest::Approx(expected - 0.0 * i).epsilon(1e-12));
      }
    (void)m;
  }

  SUBCASE("single node with no edges gets only the MLP of itself") {
    const int dim = 2;
    CgnnModel m = identity_layer_model(dim);
    CellGraph one;
    one.num_nodes = 1;
    one.node_features = Tensor2(1, dim);
    one.node_features.at(0, 0) = 0.4;
    one.node_features.at(0, 1) = 0.7;
    one.centroids_px = Tensor2(1, 2);

    Tape tape;
    const ForwardVars fv = forward_on_tape(tape, m, one, {{0, 1}});
    // classifier weights are glorot-random; check the invariant indirectly:
    // all-zero features with zero biases give zero logits
    CellGraph zero = one;
    zero.node_features = Tensor2(1, dim, 0.0);
    for (std::size_t p = 4; p < m.params.size(); p += 2) {
      // zero classifier biases, keep weights
      if (m.params[p].rows == 1)
        for (auto& v : m.params[p].data) v = 0.0;
    }
    const Prediction pred = predict(m, zero);
    for (double l : pred.logits) CHECK(l == doctest::Approx(0.0));
    (void)fv;
  }
}

TEST_CASE("masked forward saturation") {
  Rng rng(17);
  const CellGraph g = random_graph(rng, 12, 6);
  CgnnConfig cfg;
  cfg.seed = 4;
  const CgnnModel m = init_model(cfg, GraphConfig{}, g.node_features.cols, 3, {"a", "b", "c"});

  const Prediction open = predict(m, g);
  const Prediction saturated =
      predict_masked(m, g, std::vector<double>(static_cast<std::size_t>(g.num_nodes), 30.0));
  for (std::size_t i = 0; i < open.logits.size(); ++i)
    CHECK(std::abs(open.logits[i] - saturated.logits[i]) <= 1e-9);

  // fully closed mask equals forward on zeroed features
  const Prediction closed =
      predict_masked(m, g, std::vector<double>(static_cast<std::size_t>(g.num_nodes), -30.0));
  CellGraph zeroed = g;
  zeroed.node_features = Tensor2(g.num_nodes, g.node_features.cols, 0.0);
  const Prediction zero_pred = predict(m, zeroed);
  for (std::size_t i = 0; i < closed.logits.size(); ++i)
    CHECK(std::abs(closed.logits[i] - zero_pred.logits[i]) <= 1e-6);
}

TEST_CASE("graph-level logits are permutation invariant") {
  Rng rng(23);
  for (Readout readout : {Readout::Mean, Readout::Sum}) {
    CgnnConfig cfg;
    cfg.readout = readout;
    cfg.seed = 31;
    for (int trial = 0; trial < 10; ++trial) {
      const CellGraph g = random_graph(rng, rng.uniform_int(3, 20), 5);
      const CgnnModel m = init_model(cfg, GraphConfig{}, g.node_features.cols, 2, {"a", "b"});
      const Prediction base = predict(m, g);

      std::vector<int> perm(static_cast<std::size_t>(g.num_nodes));
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
      rng.shuffle(perm);
      CellGraph pg;
      pg.num_nodes = g.num_nodes;
      pg.node_features = Tensor2(g.num_nodes, g.node_features.cols);
      pg.centroids_px = Tensor2(g.num_nodes, 2);
      std::vector<int> inv(perm.size());
      for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
      for (int i = 0; i < g.num_nodes; ++i)
        for (int j = 0; j < g.node_features.cols; ++j)
          pg.node_features.at(inv[static_cast<std::size_t>(i)], j) = g.node_features.at(i, j);
      for (const auto& [u, v] : g.edges) {
        const int nu = inv[static_cast<std::size_t>(u)];
        const int nv = inv[static_cast<std::size_t>(v)];
        pg.edges.emplace_back(std::min(nu, nv), std::max(nu, nv));
      }
      const Prediction permuted = predict(m, pg);
      for (std::size_t i = 0; i < base.logits.size(); ++i)
        CHECK(std::abs(base.logits[i] - permuted.logits[i]) <= 1e-9);
    }
  }
}

TEST_CASE("batched readout equals per-graph readout") {
  Rng rng(29);
  const CellGraph a = random_graph(rng, 7, 4);
  const CellGraph b = random_graph(rng, 5, 4);
  CgnnConfig cfg;
  cfg.seed = 8;
  const CgnnModel m = init_model(cfg, GraphConfig{}, 6, 2, {"a", "b"});

  const BatchedGraph u = disjoint_union({&a, &b});
  Tape tape;
  const ForwardVars fv = forward_on_tape(tape, m, u.graph, u.ranges);
  const Tensor2& batched = tape.value(fv.logits);
  const Prediction pa = predict(m, a);
  const Prediction pb = predict(m, b);
  for (int j = 0; j < 2; ++j) {
    CHECK(batched.at(0, j) == doctest::Approx(pa.logits[static_cast<std::size_t>(j)]).epsilon(1e-12));
    CHECK(batched.at(1, j) == doctest::Approx(pb.logits[static_cast<std::size_t>(j)]).epsilon(1e-12));
  }
}

TEST_CASE("predict is deterministic and consistent") {
  Rng rng(37);
  const CellGraph g = random_graph(rng, 9, 4);
  CgnnConfig cfg;
  cfg.seed = 5;
  const CgnnModel m = init_model(cfg, GraphConfig{}, g.node_features.cols, 3, {"a", "b", "c"});
  const Prediction p1 = predict(m, g);
  const Prediction p2 = predict(m, g);
  CHECK(p1.logits == p2.logits);
  // argmax consistent with probs
  int best = 0;
  for (std::size_t i = 1; i < p1.probs.size(); ++i)
    if (p1.probs[i] > p1.probs[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  CHECK(p1.predicted_class == best);
  // identity subgraph predicts identically
  std::vector<int> all;
  for (int i = 0; i < g.num_nodes; ++i) all.push_back(i);
  const Prediction sub = predict(m, extract_subgraph(g, all).graph);
  CHECK(sub.logits == p1.logits);

  CellGraph wrong = g;
  wrong.node_features = Tensor2(g.num_nodes, g.node_features.cols + 1, 0.0);
  CHECK_THROWS_AS(predict(m, wrong), std::invalid_argument);
}

TEST_CASE("training overfits a single graph and is seed-deterministic") {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.rois_per_class = 1;
  spec.val_per_class = 1;
  spec.test_per_class = 1;
  spec.nuclei_min = 8;
  spec.nuclei_max = 12;
  spec.cluster_min = 3;
  spec.cluster_max = 4;
  spec.seed = 77;
  const DatasetSplit ds = normalize_features(generate_synthetic(spec));

  CgnnConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 11;
  cfg.weight_decay = 0.0;
  const TrainResult r1 = train(ds, cfg, GraphConfig{});
  CHECK(r1.history.back().train_loss < 0.01);

  const TrainResult r2 = train(ds, cfg, GraphConfig{});
  for (std::size_t p = 0; p < r1.model.params.size(); ++p)
    CHECK(r1.model.params[p].data == r2.model.params[p].data);
}

TEST_CASE("model checkpoint round-trips") {
  CgnnConfig cfg;
  cfg.seed = 3;
  const CgnnModel m = init_model(cfg, GraphConfig{}, 6, 2, {"x", "y"});
  const std::string path =
      (std::filesystem::temp_directory_path() / "cgx_model_roundtrip.json").string();
  save_model(m, path);
  const CgnnModel back = load_model(path);
  CHECK(back.input_dim == m.input_dim);
  CHECK(back.class_names == m.class_names);
  REQUIRE(back.params.size() == m.params.size());
  for (std::size_t p = 0; p < m.params.size(); ++p) CHECK(back.params[p].data == m.params[p].data);
  std::filesystem::remove(path);
}
