#include "tirtaint/graph_util.hpp"

#include <algorithm>

namespace tirtaint {

std::vector<uint32_t> reverse_postorder(uint32_t n, uint32_t entry,
                                        const std::vector<std::vector<uint32_t>>& succs) {
  std::vector<uint32_t> order;
  order.reserve(n);
  std::vector<uint8_t> state(n, 0);  // 0 unvisited, 1 on stack, 2 done
  // iterative DFS with explicit successor cursor
  std::vector<std::pair<uint32_t, size_t>> stack;
  stack.push_back({entry, 0});
  state[entry] = 1;
  while (!stack.empty()) {
    auto& [node, cur] = stack.back();
    if (cur < succs[node].size()) {
      uint32_t next = succs[node][cur++];
      if (state[next] == 0) {
        state[next] = 1;
        stack.push_back({next, 0});
      }
    } else {
      state[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

namespace {

std::vector<uint32_t> idom_iterative(uint32_t n, uint32_t entry,
                                     const std::vector<std::vector<uint32_t>>& preds,
                                     const std::vector<uint32_t>& rpo) {
  std::vector<uint32_t> rpo_pos(n, kNoNode);
  for (uint32_t i = 0; i < rpo.size(); i++) rpo_pos[rpo[i]] = i;
  std::vector<uint32_t> idom(n, kNoNode);
  idom[entry] = entry;
  auto intersect = [&](uint32_t a, uint32_t b) {
    while (a != b) {
      while (rpo_pos[a] > rpo_pos[b]) a = idom[a];
      while (rpo_pos[b] > rpo_pos[a]) b = idom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t node : rpo) {
      if (node == entry) continue;
      uint32_t new_idom = kNoNode;
      for (uint32_t p : preds[node]) {
        if (idom[p] == kNoNode) continue;  // unprocessed or unreachable
        new_idom = new_idom == kNoNode ? p : intersect(p, new_idom);
      }
      if (new_idom != kNoNode && idom[node] != new_idom) {
        idom[node] = new_idom;
        changed = true;
      }
    }
  }
  idom[entry] = kNoNode;
  return idom;
}

std::vector<uint32_t> tree_depths(const std::vector<uint32_t>& idom) {
  const uint32_t n = static_cast<uint32_t>(idom.size());
  std::vector<uint32_t> depth(n, kNoNode);
  for (uint32_t i = 0; i < n; i++) {
    if (depth[i] != kNoNode) continue;
    std::vector<uint32_t> chain;
    uint32_t cur = i;
    while (cur != kNoNode && depth[cur] == kNoNode) {
      chain.push_back(cur);
      cur = idom[cur];
    }
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      uint32_t p = idom[*it];
      depth[*it] = p == kNoNode ? 0 : depth[p] + 1;
    }
  }
  return depth;
}

}  // namespace

DomTree compute_dominators(uint32_t n, uint32_t entry,
                           const std::vector<std::vector<uint32_t>>& succs) {
  std::vector<std::vector<uint32_t>> preds(n);
  for (uint32_t u = 0; u < n; u++)
    for (uint32_t v : succs[u]) preds[v].push_back(u);
  auto rpo = reverse_postorder(n, entry, succs);
  DomTree t;
  t.idom = idom_iterative(n, entry, preds, rpo);
  t.depth = tree_depths(t.idom);
  return t;
}

PostDomTree compute_postdominators(uint32_t n, const std::vector<uint32_t>& exits,
                                   const std::vector<std::vector<uint32_t>>& succs) {
  // reverse graph with virtual exit node n
  std::vector<std::vector<uint32_t>> rsuccs(n + 1);
  for (uint32_t u = 0; u < n; u++)
    for (uint32_t v : succs[u]) rsuccs[v].push_back(u);
  for (uint32_t e : exits) rsuccs[n].push_back(e);
  auto rpo = reverse_postorder(n + 1, n, rsuccs);
  std::vector<std::vector<uint32_t>> rpreds(n + 1);
  for (uint32_t u = 0; u <= n; u++)
    for (uint32_t v : rsuccs[u]) rpreds[v].push_back(u);
  auto idom = idom_iterative(n + 1, n, rpreds, rpo);
  PostDomTree t;
  t.ipdom.assign(n, kNoNode);
  for (uint32_t i = 0; i < n; i++)
    t.ipdom[i] = (idom[i] == kNoNode || idom[i] == n) ? kNoNode : idom[i];
  t.depth = tree_depths(t.ipdom);
  return t;
}

SccResult tarjan_scc(uint32_t n, const std::vector<std::vector<uint32_t>>& succs) {
  SccResult res;
  res.comp.assign(n, kNoNode);
  std::vector<uint32_t> low(n, 0), num(n, 0);
  std::vector<uint8_t> on_stack(n, 0);
  std::vector<uint32_t> stack;
  uint32_t counter = 1;

  struct Frame {
    uint32_t node;
    size_t cursor;
  };
  for (uint32_t root = 0; root < n; root++) {
    if (num[root]) continue;
    std::vector<Frame> frames{{root, 0}};
    num[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = 1;
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.cursor < succs[f.node].size()) {
        uint32_t next = succs[f.node][f.cursor++];
        if (!num[next]) {
          num[next] = low[next] = counter++;
          stack.push_back(next);
          on_stack[next] = 1;
          frames.push_back({next, 0});
        } else if (on_stack[next]) {
          low[f.node] = std::min(low[f.node], num[next]);
        }
      } else {
        if (low[f.node] == num[f.node]) {
          while (true) {
            uint32_t w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
            res.comp[w] = res.count;
            if (w == f.node) break;
          }
          res.count++;
        }
        uint32_t done = f.node;
        frames.pop_back();
        if (!frames.empty())
          low[frames.back().node] = std::min(low[frames.back().node], low[done]);
      }
    }
  }
  return res;
}

}  // namespace tirtaint
