#pragma once

#include <cstdint>
#include <ostream>

namespace cgx {

// Finite-difference verification of every tape primitive (50 random instances
// each, < 1e-6 max relative error) plus the full CGNN training loss wrt all
// parameters and the explainer loss wrt mask logits on a 6-node graph
// (< 1e-4). Prints one line per check; returns true when everything passes.
bool run_gradcheck(std::uint64_t seed, std::ostream& os);

}  // namespace cgx
