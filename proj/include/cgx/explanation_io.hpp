#pragma once

#include <string>

#include "cgx/explainer.hpp"
#include "cgx/graph.hpp"

namespace cgx {

// Lossless JSON round-trip of mask values, kept indices (original-graph
// numbering), stop reason, and loss trace. The subgraph itself is not
// serialized; it is reconstructable from kept_nodes.
void write_explanation(const Explanation& expl, const std::string& path);
Explanation read_explanation(const std::string& path);

// Kept node centroids (pixels) + σ values + induced edges, for external plotting.
void write_overlay(const Explanation& expl, const CellGraph& graph, const std::string& path);

}  // namespace cgx
