#pragma once

#include <cstdint>
#include <vector>

// Small graph helpers shared by the analyses: reverse postorder, iterative
// dominator trees (Cooper-Harvey-Kennedy), and Tarjan SCCs.

namespace tirtaint {

inline constexpr uint32_t kNoNode = 0xffffffffu;

// Reverse postorder over nodes reachable from entry.
std::vector<uint32_t> reverse_postorder(uint32_t n, uint32_t entry,
                                        const std::vector<std::vector<uint32_t>>& succs);

struct DomTree {
  std::vector<uint32_t> idom;   // kNoNode for entry and unreachable nodes
  std::vector<uint32_t> depth;  // tree depth; 0 for entry

  bool dominates(uint32_t a, uint32_t b) const {
    if (a == b) return true;
    while (b != kNoNode && depth[b] > depth[a]) b = idom[b];
    return a == b;
  }
  // Number of nodes in the dominator set of n (ancestors plus itself).
  uint32_t dom_set_size(uint32_t n) const { return depth[n] + 1; }
};

// Dominators of the graph (entry, succs). Unreachable nodes get
// idom = kNoNode and depth = 0.
DomTree compute_dominators(uint32_t n, uint32_t entry,
                           const std::vector<std::vector<uint32_t>>& succs);

// Post-dominators computed on the reverse graph against a virtual exit
// that every node in `exits` reaches. ipostdom[n] == kNoNode means n has
// no post-dominator other than the virtual exit (or cannot reach exit).
struct PostDomTree {
  std::vector<uint32_t> ipdom;
  std::vector<uint32_t> depth;

  bool postdominates(uint32_t a, uint32_t b) const {
    if (a == b) return true;
    while (b != kNoNode && depth[b] > depth[a]) b = ipdom[b];
    return a == b;
  }
};

PostDomTree compute_postdominators(uint32_t n, const std::vector<uint32_t>& exits,
                                   const std::vector<std::vector<uint32_t>>& succs);

// Tarjan strongly connected components; returns component id per node,
// components numbered in reverse topological order of the condensation.
struct SccResult {
  std::vector<uint32_t> comp;  // node -> component id
  uint32_t count = 0;
};

SccResult tarjan_scc(uint32_t n, const std::vector<std::vector<uint32_t>>& succs);

}  // namespace tirtaint
