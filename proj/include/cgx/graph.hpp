#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "cgx/tensor.hpp"

namespace cgx {

// One detected nucleus: pixel centroid plus an opaque feature vector of
// length F (feature extraction is external to this artifact).
struct NucleusRecord {
  double x = 0.0;
  double y = 0.0;
  std::vector<double> features;
};

struct GraphConfig {
  int k = 5;
  double max_edge_px = 50.0;
  // union: edge if u picks v or v picks u; mutual: both must pick each other
  bool mutual = false;
};

using Edge = std::pair<int, int>;  // stored with first < second

// Undirected cell graph. node_features is |V|×d with d = F + 2; the last two
// columns are the centroid normalized by image size. Raw pixel centroids are
// kept for distance computations and overlay output.
struct CellGraph {
  int num_nodes = 0;
  std::vector<Edge> edges;  // sorted, deduplicated, u < v, no self-loops
  Tensor2 node_features;
  Tensor2 centroids_px;
  int label = -1;  // -1 when unset

  int num_edges() const { return static_cast<int>(edges.size()); }
  std::vector<std::vector<int>> neighbor_lists() const;
};

using Point = std::array<double, 2>;

// kNN edges by Euclidean pixel distance, symmetrized (union by default).
// Ties broken by ascending node index. Nodes connect to all others when
// |V| <= k. Empty input yields an empty edge set.
std::vector<Edge> knn_edges(const std::vector<Point>& points, int k, bool mutual = false);

// Keeps exactly the edges of length <= max_edge_px (inclusive boundary).
std::vector<Edge> threshold_edges(const std::vector<Edge>& edges,
                                  const std::vector<Point>& points, double max_edge_px);

// Thresholded kNN graph over nucleus centroids; node i carries
// concat(features, x/image_w, y/image_h). Isolated nodes are retained.
CellGraph build_cell_graph(const std::vector<NucleusRecord>& nuclei, double image_w,
                           double image_h, const GraphConfig& cfg);

struct SubgraphResult {
  CellGraph graph;
  std::vector<int> node_origin;  // new index -> original index
};

// Induced subgraph on keep_nodes, densely reindexed preserving original order.
SubgraphResult extract_subgraph(const CellGraph& graph, const std::vector<int>& keep_nodes);

struct BatchedGraph {
  CellGraph graph;
  std::vector<std::pair<int, int>> ranges;  // [lo, hi) node range per input graph
};

BatchedGraph disjoint_union(const std::vector<const CellGraph*>& graphs);

}  // namespace cgx
