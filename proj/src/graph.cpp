#include "cgx/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace cgx {

namespace {

double dist2(const Point& a, const Point& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

// directed k-nearest picks per node, ties by smaller index
std::vector<std::vector<int>> knn_picks(const std::vector<Point>& points, int k) {
  const int n = static_cast<int>(points.size());
  std::vector<std::vector<int>> picks(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> cand;
  for (int u = 0; u < n; ++u) {
    cand.clear();
    for (int v = 0; v < n; ++v)
      if (v != u) cand.emplace_back(dist2(points[static_cast<std::size_t>(u)], points[static_cast<std::size_t>(v)]), v);
    const int take = std::min<int>(k, static_cast<int>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end());
    for (int i = 0; i < take; ++i) picks[static_cast<std::size_t>(u)].push_back(cand[static_cast<std::size_t>(i)].second);
  }
  return picks;
}

}  // namespace

std::vector<std::vector<int>> CellGraph::neighbor_lists() const {
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(num_nodes));
  for (const auto& [u, v] : edges) {
    nbrs[static_cast<std::size_t>(u)].push_back(v);
    nbrs[static_cast<std::size_t>(v)].push_back(u);
  }
  return nbrs;
}

std::vector<Edge> knn_edges(const std::vector<Point>& points, int k, bool mutual) {
  if (k < 1) throw std::invalid_argument("knn_edges: k must be >= 1");
  const int n = static_cast<int>(points.size());
  if (n <= 1) return {};
  const auto picks = knn_picks(points, k);
  std::set<Edge> out;
  if (mutual) {
    std::vector<std::set<int>> pick_sets(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u)
      pick_sets[static_cast<std::size_t>(u)].insert(picks[static_cast<std::size_t>(u)].begin(),
                                                    picks[static_cast<std::size_t>(u)].end());
    for (int u = 0; u < n; ++u)
      for (int v : picks[static_cast<std::size_t>(u)])
        if (v > u && pick_sets[static_cast<std::size_t>(v)].count(u)) out.insert({u, v});
  } else {
    for (int u = 0; u < n; ++u)
      for (int v : picks[static_cast<std::size_t>(u)])
        out.insert({std::min(u, v), std::max(u, v)});
  }
  return {out.begin(), out.end()};
}

std::vector<Edge> threshold_edges(const std::vector<Edge>& edges,
                                  const std::vector<Point>& points, double max_edge_px) {
  if (max_edge_px <= 0.0) throw std::invalid_argument("threshold_edges: max_edge_px must be > 0");
  const double limit2 = max_edge_px * max_edge_px;
  std::vector<Edge> out;
  for (const auto& e : edges) {
    if (e.first < 0 || e.second < 0 || e.first >= static_cast<int>(points.size()) ||
        e.second >= static_cast<int>(points.size()))
      throw std::invalid_argument("threshold_edges: edge endpoint out of range");
    if (dist2(points[static_cast<std::size_t>(e.first)], points[static_cast<std::size_t>(e.second)]) <= limit2)
      out.push_back(e);
  }
  return out;
}

CellGraph build_cell_graph(const std::vector<NucleusRecord>& nuclei, double image_w,
                           double image_h, const GraphConfig& cfg) {
  if (nuclei.empty()) throw std::runtime_error("empty RoI");
  if (image_w <= 0.0 || image_h <= 0.0)
    throw std::invalid_argument("build_cell_graph: image size must be positive");
  const std::size_t feat_len = nuclei.front().features.size();
  const int n = static_cast<int>(nuclei.size());

  std::vector<Point> points;
  points.reserve(nuclei.size());
  for (const auto& rec : nuclei) {
    if (rec.features.size() != feat_len)
      throw std::runtime_error("invalid feature: inconsistent feature length");
    for (double f : rec.features)
      if (!std::isfinite(f)) throw std::runtime_error("invalid feature");
    if (!std::isfinite(rec.x) || !std::isfinite(rec.y) || rec.x < 0.0 || rec.y < 0.0)
      throw std::runtime_error("invalid feature: bad centroid");
    points.push_back({rec.x, rec.y});
  }

  CellGraph g;
  g.num_nodes = n;
  g.node_features = Tensor2(n, static_cast<int>(feat_len) + 2);
  g.centroids_px = Tensor2(n, 2);
  for (int i = 0; i < n; ++i) {
    const auto& rec = nuclei[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < feat_len; ++j) g.node_features.at(i, static_cast<int>(j)) = rec.features[j];
    g.node_features.at(i, static_cast<int>(feat_len)) = rec.x / image_w;
    g.node_features.at(i, static_cast<int>(feat_len) + 1) = rec.y / image_h;
    g.centroids_px.at(i, 0) = rec.x;
    g.centroids_px.at(i, 1) = rec.y;
  }
  g.edges = threshold_edges(knn_edges(points, cfg.k, cfg.mutual), points, cfg.max_edge_px);
  return g;
}

SubgraphResult extract_subgraph(const CellGraph& graph, const std::vector<int>& keep_nodes) {
  std::vector<int> keep = keep_nodes;
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  if (keep.empty()) throw std::runtime_error("empty explanation");
  if (keep.front() < 0 || keep.back() >= graph.num_nodes)
    throw std::invalid_argument("extract_subgraph: node index out of range");

  std::vector<int> remap(static_cast<std::size_t>(graph.num_nodes), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) remap[static_cast<std::size_t>(keep[i])] = static_cast<int>(i);

  SubgraphResult res;
  res.node_origin = keep;
  CellGraph& sub = res.graph;
  sub.num_nodes = static_cast<int>(keep.size());
  sub.label = graph.label;
  sub.node_features = Tensor2(sub.num_nodes, graph.node_features.cols);
  sub.centroids_px = Tensor2(sub.num_nodes, 2);
  for (int i = 0; i < sub.num_nodes; ++i) {
    const int src = keep[static_cast<std::size_t>(i)];
    for (int j = 0; j < graph.node_features.cols; ++j)
      sub.node_features.at(i, j) = graph.node_features.at(src, j);
    sub.centroids_px.at(i, 0) = graph.centroids_px.at(src, 0);
    sub.centroids_px.at(i, 1) = graph.centroids_px.at(src, 1);
  }
  for (const auto& [u, v] : graph.edges) {
    const int nu = remap[static_cast<std::size_t>(u)];
    const int nv = remap[static_cast<std::size_t>(v)];
    if (nu >= 0 && nv >= 0) sub.edges.emplace_back(std::min(nu, nv), std::max(nu, nv));
  }
  std::sort(sub.edges.begin(), sub.edges.end());
  return res;
}

BatchedGraph disjoint_union(const std::vector<const CellGraph*>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("disjoint_union: empty graph list");
  const int d = graphs.front()->node_features.cols;
  int total = 0;
  for (const CellGraph* g : graphs) {
    if (g->node_features.cols != d)
      throw std::invalid_argument("disjoint_union: feature dimension mismatch");
    total += g->num_nodes;
  }
  BatchedGraph out;
  out.graph.num_nodes = total;
  out.graph.node_features = Tensor2(total, d);
  out.graph.centroids_px = Tensor2(total, 2);
  int offset = 0;
  for (const CellGraph* g : graphs) {
    for (int i = 0; i < g->num_nodes; ++i) {
      for (int j = 0; j < d; ++j) out.graph.node_features.at(offset + i, j) = g->node_features.at(i, j);
      out.graph.centroids_px.at(offset + i, 0) = g->centroids_px.at(i, 0);
      out.graph.centroids_px.at(offset + i, 1) = g->centroids_px.at(i, 1);
    }
    for (const auto& [u, v] : g->edges) out.graph.edges.emplace_back(u + offset, v + offset);
    out.ranges.emplace_back(offset, offset + g->num_nodes);
    offset += g->num_nodes;
  }
  return out;
}

}  // namespace cgx
