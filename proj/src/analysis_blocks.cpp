#include <algorithm>
#include <deque>
#include <map>
#include <set>

#include "reaching_defs.hpp"
#include "tirtaint/analysis.hpp"
#include "tirtaint/graph_util.hpp"

// Taint-unchanged block pruning, reduced-CFG dominator selection, function
// elimination, and loop classification.

namespace tirtaint {

namespace {

// A block may leave the function without taking a CFG edge: ret, halt,
// falling past the end, or a conditional branch whose fallthrough is the end.
bool block_can_exit(const Program& p, const BasicBlock& b) {
  const Function& f = p.fn(b.fn);
  const Instruction& term = f.at(b.last);
  if (term.op == Opcode::Ret || term.op == Opcode::Halt) return true;
  if (b.last == f.size() && term.op != Opcode::Jmp) return true;
  return false;
}

// Status algebra for the exhaustive per-block taint check: a cell status is
// `forced OR the disjunction of input bits in mask`. The input bits are the
// block's incoming register statuses and one bit per memory read.
struct CellStatus {
  uint32_t mask = 0;
  bool forced = false;

  static CellStatus input(uint32_t bit) { return {1u << bit, false}; }
  static CellStatus clean() { return {0, false}; }
  CellStatus operator|(const CellStatus& o) const {
    return {mask | o.mask, forced || o.forced};
  }
  bool provably_clean() const { return mask == 0 && !forced; }
  friend bool operator==(const CellStatus& a, const CellStatus& b) {
    return a.mask == b.mask && a.forced == b.forced;
  }
};

struct UnchangedChecker {
  const Program& p;
  const TaintConfig& config;
  const std::vector<bool>& fn_skipped;
  const std::vector<bool>& fn_summarized;
  const MayTaintInfo& may;
  const std::vector<MvsaResult>& mvsa;

  static constexpr uint32_t kMaxCells = 16;

  std::optional<uint64_t> known_addr(uint32_t fi, Label l, Register base,
                                     int64_t disp) const {
    auto it = mvsa[fi].known_in.find({l, base});
    if (it == mvsa[fi].known_in.end()) return std::nullopt;
    return it->second + static_cast<uint64_t>(disp);
  }

  bool block_is_unchanged(uint32_t fi, const BasicBlock& b) const {
    const Function& f = p.fn(fi);
    uint32_t next_bit = 0;
    std::map<uint8_t, uint32_t> reg_bit;   // register -> input bit
    std::map<uint8_t, CellStatus> status;  // register -> current status
    std::set<uint8_t> defined;

    auto reg_status = [&](Register r) -> CellStatus {
      auto it = status.find(r.index);
      if (it != status.end()) return it->second;
      // a register that is never tainted anywhere holds a constant status
      if (!may.reg[fi][r.index]) {
        status[r.index] = CellStatus::clean();
        return CellStatus::clean();
      }
      if (next_bit >= kMaxCells) return {0xffffffffu, true};  // cap: force bail
      uint32_t bit = next_bit++;
      reg_bit[r.index] = bit;
      CellStatus s = CellStatus::input(bit);
      status[r.index] = s;
      return s;
    };
    auto operand_status = [&](const Operand& o) {
      return o.is_reg() ? reg_status(o.reg) : CellStatus::clean();
    };

    for (uint32_t i = b.leader; i <= b.last; i++) {
      Label l{fi, i};
      if (config.is_source(l) || config.is_sink(l)) return false;
      const Instruction& ins = f.at(i);
      if (next_bit > kMaxCells) return false;
      switch (ins.op) {
        case Opcode::Mov: {
          CellStatus v = operand_status(*ins.src);
          status[ins.dst->reg.index] = v;
          defined.insert(ins.dst->reg.index);
          break;
        }
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor: {
          bool xor_self = ins.op == Opcode::Xor && ins.src->is_reg() &&
                          ins.src->reg == ins.dst->reg;
          CellStatus v = xor_self
                             ? CellStatus::clean()
                             : reg_status(ins.dst->reg) | operand_status(*ins.src);
          status[ins.dst->reg.index] = v;
          defined.insert(ins.dst->reg.index);
          break;
        }
        case Opcode::Load:
        case Opcode::Pop: {
          std::optional<uint64_t> a;
          if (ins.op == Opcode::Load)
            a = known_addr(fi, l, ins.src->reg, ins.src->value);
          CellStatus v = CellStatus::clean();
          if (may.mem_may_overlap(a)) {
            if (next_bit >= kMaxCells) return false;
            v = CellStatus::input(next_bit++);
          }
          status[ins.dst->reg.index] = v;
          defined.insert(ins.dst->reg.index);
          break;
        }
        case Opcode::Store:
        case Opcode::Push: {
          // weak update: only a provably clean register store is a no-op
          if (!ins.src->is_reg()) {
            // an immediate store can only sanitize a word that may be tainted
            std::optional<uint64_t> a;
            if (ins.op == Opcode::Store)
              a = known_addr(fi, l, ins.dst->reg, ins.dst->value);
            if (may.mem_may_overlap(a)) return false;
            break;
          }
          if (!operand_status(*ins.src).provably_clean()) return false;
          break;
        }
        case Opcode::Call: {
          uint32_t g = ins.target;
          if (fn_summarized[g]) return false;  // rule application changes state
          if (!fn_skipped[g]) return false;
          break;
        }
        case Opcode::TaintSource:
        case Opcode::TaintSink:
          return false;
        case Opcode::Cmp:
          // flag taint matters only under implicit propagation
          if (config.implicit_control_taint) return false;
          break;
        case Opcode::Jcc:
          if (config.implicit_control_taint) return false;
          break;
        default:
          break;
      }
      if (next_bit > kMaxCells) return false;
    }

    for (uint8_t r : defined) {
      if (!may.reg[fi][r]) continue;  // never tainted: status constant clean
      auto bit_it = reg_bit.find(r);
      // a register defined before being read can only keep its status if
      // its final expression collapses to its own input bit
      uint32_t own;
      if (bit_it != reg_bit.end()) {
        own = bit_it->second;
      } else {
        if (next_bit >= kMaxCells) return false;
        own = next_bit++;
      }
      if (!(status[Register{r}.index] == CellStatus::input(own))) return false;
    }
    return true;
  }
};

std::vector<bool> skipped_flags(const Program& p, const std::vector<std::string>& names) {
  std::vector<bool> out(p.functions.size(), false);
  for (const auto& n : names)
    if (auto fi = p.find_function(n)) out[*fi] = true;
  return out;
}

}  // namespace

std::vector<std::string> eliminate_functions(const Program& p, const Cfg& cfg,
                                             const TaintConfig& config) {
  MayTaintInfo may = compute_may_taint(p, cfg, config);
  if (config.implicit_control_taint) return {};

  std::vector<MvsaResult> mvsa(p.functions.size());
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) mvsa[fi] = run_mvsa(p, fi, cfg);
  auto known_addr = [&](uint32_t fi, Label l, Register base,
                        int64_t disp) -> std::optional<uint64_t> {
    auto it = mvsa[fi].known_in.find({l, base});
    if (it == mvsa[fi].known_in.end()) return std::nullopt;
    return it->second + static_cast<uint64_t>(disp);
  };

  std::vector<bool> skippable(p.functions.size(), true);
  for (uint32_t fi = 0; fi < p.functions.size(); fi++)
    if (may.summarized_fn[fi]) skippable[fi] = true;  // bodies are not tracked

  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      if (!skippable[fi] || may.summarized_fn[fi]) continue;
      const Function& f = p.functions[fi];
      bool ok = true;
      for (uint32_t i = 1; i <= f.size() && ok; i++) {
        Label l{fi, i};
        if (config.is_source(l) || config.is_sink(l)) {
          ok = false;
          break;
        }
        const Instruction& ins = f.at(i);
        auto clean = [&](Register r) { return !may.reg[fi][r.index]; };
        switch (ins.op) {
          case Opcode::Mov:
            if (ins.src->is_reg())
              ok = clean(ins.src->reg) && clean(ins.dst->reg);
            else
              ok = clean(ins.dst->reg);
            break;
          case Opcode::Add:
          case Opcode::Sub:
          case Opcode::And:
          case Opcode::Or:
            ok = !ins.src->is_reg() || clean(ins.src->reg);
            break;
          case Opcode::Xor:
            if (ins.src->is_reg() && ins.src->reg == ins.dst->reg)
              ok = clean(ins.dst->reg);
            else
              ok = !ins.src->is_reg() || clean(ins.src->reg);
            break;
          case Opcode::Load:
            ok = !may.mem_may_overlap(known_addr(fi, l, ins.src->reg, ins.src->value)) &&
                 clean(ins.dst->reg);
            break;
          case Opcode::Pop:
            ok = !may.mem_may_overlap(std::nullopt) && clean(ins.dst->reg);
            break;
          case Opcode::Store:
            if (ins.src->is_reg())
              ok = clean(ins.src->reg);
            else
              ok = !may.mem_may_overlap(known_addr(fi, l, ins.dst->reg, ins.dst->value));
            break;
          case Opcode::Push:
            ok = ins.src->is_reg() ? clean(ins.src->reg) : !may.mem_may_overlap(std::nullopt);
            break;
          case Opcode::Call:
            ok = skippable[ins.target] && !may.summarized_fn[ins.target];
            break;
          case Opcode::TaintSource:
          case Opcode::TaintSink:
            ok = false;
            break;
          default:
            break;
        }
      }
      if (!ok) {
        skippable[fi] = false;
        changed = true;
      }
    }
  }

  std::vector<std::string> out;
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    if (may.summarized_fn[fi] || (skippable[fi] && fi != p.entry))
      out.push_back(p.functions[fi].name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<uint32_t> compute_taint_unchanged_blocks(const Program& p, uint32_t fn,
                                                     const Cfg& cfg,
                                                     const TaintConfig& config) {
  std::vector<std::string> skipped = eliminate_functions(p, cfg, config);
  std::vector<bool> fn_skipped = skipped_flags(p, skipped);
  std::vector<bool> fn_summ(p.functions.size(), false);
  for (uint32_t fi = 0; fi < p.functions.size(); fi++)
    if (config.summaries.count(p.functions[fi].name)) fn_summ[fi] = true;
  MayTaintInfo may = compute_may_taint(p, cfg, config);
  std::vector<MvsaResult> mvsa(p.functions.size());
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) mvsa[fi] = run_mvsa(p, fi, cfg);

  // Sites the replay's value engine must walk: the closure feeding every
  // relevant memory address. Blocks holding them stay in the reduced CFG
  // even when their taint transfer is the identity.
  std::set<uint32_t> needed_sites;  // 1-based instruction indices
  {
    Vfg vfg = build_vfg(p, fn, cfg);
    enrich_vfg(vfg, mvsa[fn]);
    mark_relevant_memory(vfg, p, cfg, config, may);
    std::vector<bool> needed(vfg.nodes.size(), false);
    std::deque<uint32_t> work;
    for (uint32_t i = 0; i < vfg.needed_use_.size(); i++)
      if (vfg.needed_use_[i]) {
        needed[i] = true;
        work.push_back(i);
      }
    while (!work.empty()) {
      uint32_t n = work.front();
      work.pop_front();
      if (vfg.kind[n] == ValueKind::Known) continue;
      for (uint32_t prd : vfg.value_preds[n])
        if (!needed[prd]) {
          needed[prd] = true;
          work.push_back(prd);
        }
    }
    for (uint32_t i = 0; i < vfg.nodes.size(); i++)
      if (needed[i]) needed_sites.insert(vfg.nodes[i].site.idx);
  }

  UnchangedChecker checker{p, config, fn_skipped, fn_summ, may, mvsa};
  std::vector<uint32_t> out;
  for (const auto& b : cfg.per_fn[fn].blocks) {
    bool holds_needed = false;
    for (uint32_t i = b.leader; i <= b.last && !holds_needed; i++)
      if (needed_sites.count(i)) holds_needed = true;
    if (!holds_needed && checker.block_is_unchanged(fn, b)) out.push_back(b.id);
  }
  return out;
}

// ---- reduced CFG ----

std::optional<uint32_t> ReducedCfg::pos_of(uint32_t block_id) const {
  for (uint32_t i = 0; i < kept.size(); i++)
    if (kept[i] == block_id) return i;
  return std::nullopt;
}

ReducedCfg build_reduced_cfg(const Program& p, uint32_t fn, const Cfg& cfg,
                             const std::vector<uint32_t>& removed_blocks) {
  const FunctionCfg& fc = cfg.per_fn[fn];
  const uint32_t nb = static_cast<uint32_t>(fc.blocks.size());
  uint32_t base = fc.blocks.empty() ? 0 : fc.blocks.front().id;
  std::set<uint32_t> removed(removed_blocks.begin(), removed_blocks.end());

  // reachability over the original graph
  std::vector<bool> reach(nb, false);
  std::deque<uint32_t> work{0};
  if (nb) reach[0] = true;
  while (!work.empty()) {
    uint32_t b = work.front();
    work.pop_front();
    for (uint32_t s : fc.blocks[b].succs) {
      uint32_t sl = s - base;
      if (!reach[sl]) {
        reach[sl] = true;
        work.push_back(sl);
      }
    }
  }

  ReducedCfg r;
  r.fn = fn;
  std::vector<uint32_t> pos(nb, kNoNode);
  for (uint32_t b = 0; b < nb; b++) {
    if (!reach[b] || removed.count(fc.blocks[b].id)) continue;
    pos[b] = static_cast<uint32_t>(r.kept.size());
    r.kept.push_back(fc.blocks[b].id);
  }
  r.succs.assign(r.kept.size(), {});
  r.exits.assign(r.kept.size(), false);

  // closure from a local block through removed blocks to the first kept ones
  auto closure = [&](uint32_t from_local, std::set<uint32_t>& kept_out, bool& exits) {
    std::set<uint32_t> seen;
    std::deque<uint32_t> q{from_local};
    while (!q.empty()) {
      uint32_t b = q.front();
      q.pop_front();
      if (seen.count(b)) continue;
      seen.insert(b);
      if (pos[b] != kNoNode) {
        kept_out.insert(pos[b]);
        continue;
      }
      if (block_can_exit(p, fc.blocks[b])) exits = true;
      for (uint32_t s : fc.blocks[b].succs) q.push_back(s - base);
    }
  };

  for (uint32_t b = 0; b < nb; b++) {
    if (pos[b] == kNoNode) continue;
    std::set<uint32_t> succ_pos;
    bool exits = block_can_exit(p, fc.blocks[b]);
    for (uint32_t s : fc.blocks[b].succs) {
      std::set<uint32_t> ks;
      closure(s - base, ks, exits);
      for (uint32_t k : ks) succ_pos.insert(k);
    }
    r.succs[pos[b]].assign(succ_pos.begin(), succ_pos.end());
    r.exits[pos[b]] = exits;
  }

  if (nb) {
    std::set<uint32_t> es;
    bool ex = false;
    if (pos[0] != kNoNode) {
      es.insert(pos[0]);
    } else {
      closure(0, es, ex);
    }
    r.entry.assign(es.begin(), es.end());
    r.entry_exits = ex;
  }
  return r;
}

std::vector<uint32_t> select_target_blocks(const ReducedCfg& rcfg) {
  const uint32_t n = static_cast<uint32_t>(rcfg.kept.size());
  if (n == 0) return {};
  // virtual entry = n, virtual exit handled by the postdominator helper
  std::vector<std::vector<uint32_t>> succs(n + 1);
  for (uint32_t i = 0; i < n; i++) succs[i] = rcfg.succs[i];
  succs[n] = rcfg.entry;
  DomTree dom = compute_dominators(n + 1, n, succs);

  std::vector<uint32_t> exits;
  for (uint32_t i = 0; i < n; i++)
    if (rcfg.exits[i]) exits.push_back(i);
  std::vector<std::vector<uint32_t>> real_succs(n);
  for (uint32_t i = 0; i < n; i++) real_succs[i] = rcfg.succs[i];
  PostDomTree pdom = compute_postdominators(n, exits, real_succs);

  std::vector<bool> reachable(n, false);
  for (uint32_t i = 0; i < n; i++)
    reachable[i] = dom.idom[i] != kNoNode || (dom.depth[i] > 0);
  for (uint32_t e : rcfg.entry) reachable[e] = true;

  // dominance graph: u -> v when u dominates or post-dominates v
  std::vector<std::vector<uint32_t>> dg(n);
  for (uint32_t u = 0; u < n; u++) {
    if (!reachable[u]) continue;
    for (uint32_t v = 0; v < n; v++) {
      if (u == v || !reachable[v]) continue;
      if (dom.dominates(u, v) || pdom.postdominates(u, v)) dg[u].push_back(v);
    }
  }
  SccResult scc = tarjan_scc(n, dg);
  std::vector<std::optional<uint32_t>> pick(scc.count);
  for (uint32_t v = 0; v < n; v++) {
    if (!reachable[v]) continue;
    uint32_t c = scc.comp[v];
    if (!pick[c]) {
      pick[c] = v;
      continue;
    }
    uint32_t cur = *pick[c];
    uint32_t wv = dom.dom_set_size(v), wc = dom.dom_set_size(cur);
    if (wv > wc || (wv == wc && rcfg.kept[v] < rcfg.kept[cur])) pick[c] = v;
  }
  std::vector<uint32_t> out;
  for (auto& sel : pick)
    if (sel) out.push_back(rcfg.kept[*sel]);
  std::sort(out.begin(), out.end());
  return out;
}

// ---- loops ----

std::vector<LoopInfo> find_loops(const Program& p, uint32_t fn, const Cfg& cfg) {
  const FunctionCfg& fc = cfg.per_fn[fn];
  const uint32_t nb = static_cast<uint32_t>(fc.blocks.size());
  if (!nb) return {};
  uint32_t base = fc.blocks.front().id;
  std::vector<std::vector<uint32_t>> succs(nb), preds(nb);
  for (uint32_t b = 0; b < nb; b++)
    for (uint32_t s : fc.blocks[b].succs) {
      succs[b].push_back(s - base);
      preds[s - base].push_back(b);
    }
  DomTree dom = compute_dominators(nb, 0, succs);

  std::map<uint32_t, LoopInfo> by_header;
  for (uint32_t u = 0; u < nb; u++) {
    for (uint32_t h : succs[u]) {
      if (!dom.dominates(h, u)) continue;
      LoopInfo& li = by_header[h];
      li.header = h;
      li.latches.push_back(u);
      // body: nodes that reach u without passing h
      std::set<uint32_t> body{h, u};
      std::deque<uint32_t> q{u};
      while (!q.empty()) {
        uint32_t x = q.front();
        q.pop_front();
        if (x == h) continue;
        for (uint32_t pb : preds[x])
          if (!body.count(pb)) {
            body.insert(pb);
            q.push_back(pb);
          }
      }
      for (uint32_t b : body)
        if (std::find(li.body.begin(), li.body.end(), b) == li.body.end())
          li.body.push_back(b);
    }
  }

  const Function& f = p.fn(fn);
  std::vector<LoopInfo> out;
  for (auto& [h, li] : by_header) {
    std::sort(li.body.begin(), li.body.end());
    std::sort(li.latches.begin(), li.latches.end());
    li.latches.erase(std::unique(li.latches.begin(), li.latches.end()), li.latches.end());
    // induction variables: every in-loop definition is a constant-stride
    // update, with a stride on a path dominating some latch
    for (int r = 0; r < kNumRegisters; r++) {
      Register reg{static_cast<uint8_t>(r)};
      std::vector<Label> strides;
      bool all_strides = true;
      for (uint32_t b : li.body) {
        for (uint32_t i = fc.blocks[b].leader; i <= fc.blocks[b].last && all_strides; i++) {
          const Instruction& ins = f.at(i);
          ClobberMap cl;  // only needed for calls; checked below
          (void)cl;
          bool defines = false;
          switch (ins.op) {
            case Opcode::Mov:
            case Opcode::Load:
            case Opcode::Add:
            case Opcode::Sub:
            case Opcode::And:
            case Opcode::Or:
            case Opcode::Xor:
              defines = ins.dst->reg == reg;
              break;
            case Opcode::Pop:
              defines = ins.dst->reg == reg || reg == Register{kStackRegister};
              break;
            case Opcode::Push:
              defines = reg == Register{kStackRegister};
              break;
            case Opcode::Call:
              defines = true;  // conservatively assume clobber
              break;
            default:
              break;
          }
          if (!defines) continue;
          bool stride = (ins.op == Opcode::Add || ins.op == Opcode::Sub) &&
                        ins.dst->reg == reg && ins.src->is_imm();
          if (stride)
            strides.push_back(Label{fn, i});
          else
            all_strides = false;
        }
        if (!all_strides) break;
      }
      if (!all_strides || strides.empty()) continue;
      bool covers_latch = false;
      for (const Label& s : strides)
        for (uint32_t latch : li.latches)
          if (dom.dominates(fc.block_at(s.idx), latch)) covers_latch = true;
      if (!covers_latch) continue;
      li.ivs.push_back(reg);
      for (const Label& s : strides) li.iv_defs.push_back(s);
    }
    out.push_back(std::move(li));
  }
  return out;
}

LoopKind classify_loop(const LoopInfo& loop, const Vfg& vfg, const Program& p,
                       uint32_t fn, const Cfg& cfg, const TaintConfig& config,
                       const MayTaintInfo& may) {
  (void)config;
  const FunctionCfg& fc = cfg.per_fn[fn];
  const Function& f = p.fn(fn);
  std::set<uint32_t> body(loop.body.begin(), loop.body.end());

  // irreducible shapes come in as loops without identified structure
  if (loop.body.empty()) return LoopKind::NonOnce;

  // forward reachability from IV stride definitions over the VFG
  std::vector<bool> iv_reach(vfg.nodes.size(), false);
  {
    std::deque<uint32_t> q;
    for (const Label& d : loop.iv_defs) {
      Register r = f.at(d.idx).dst->reg;
      if (auto ni = vfg.try_find(VfgNode{d, false, r, true})) {
        iv_reach[*ni] = true;
        q.push_back(*ni);
      }
    }
    std::vector<std::vector<uint32_t>> succs(vfg.nodes.size());
    for (const auto& e : vfg.edges) succs[e.from].push_back(e.to);
    while (!q.empty()) {
      uint32_t n = q.front();
      q.pop_front();
      for (uint32_t s : succs[n])
        if (!iv_reach[s]) {
          iv_reach[s] = true;
          q.push_back(s);
        }
    }
  }

  // taint cells in the body: may-tainted register defs plus relevant memory
  struct Cell {
    uint32_t node;
    uint32_t block;  // local
  };
  std::vector<Cell> cells;
  for (uint32_t ni = 0; ni < vfg.nodes.size(); ni++) {
    const VfgNode& n = vfg.nodes[ni];
    if (n.site.fn != fn) continue;
    uint32_t blk = fc.block_at(n.site.idx);
    if (!body.count(blk)) continue;
    if (n.is_mem) {
      if (vfg.relevant_mem[ni]) cells.push_back({ni, blk});
    } else if (n.is_def && may.reg[fn][n.reg.index]) {
      cells.push_back({ni, blk});
    }
  }

  // IV-dependent conditional branches inside the loop, loop branch excluded
  uint32_t nb = static_cast<uint32_t>(fc.blocks.size());
  uint32_t base = fc.blocks.front().id;
  std::vector<std::vector<uint32_t>> succs(nb);
  std::vector<uint32_t> exits;
  for (uint32_t b = 0; b < nb; b++) {
    for (uint32_t s : fc.blocks[b].succs) succs[b].push_back(s - base);
    if (block_can_exit(p, fc.blocks[b])) exits.push_back(b);
  }
  PostDomTree pdom = compute_postdominators(nb, exits, succs);
  auto control_dependent = [&](uint32_t blk, uint32_t branch_blk) {
    if (pdom.postdominates(blk, branch_blk)) return false;
    for (uint32_t s : succs[branch_blk])
      if (s == blk || pdom.postdominates(blk, s)) return true;
    return false;
  };

  std::vector<uint32_t> iv_branches;
  for (uint32_t b : loop.body) {
    const Instruction& term = f.at(fc.blocks[b].last);
    if (term.op != Opcode::Jcc) continue;
    // loop branch: a successor leaves the loop or re-enters the header
    bool is_loop_branch = false;
    for (uint32_t s : fc.blocks[b].succs) {
      uint32_t sl = s - base;
      if (!body.count(sl) || sl == loop.header) is_loop_branch = true;
    }
    if (is_loop_branch) continue;
    // flags come from the nearest preceding cmp in the block
    bool iv_dep = true;
    for (uint32_t i = fc.blocks[b].last; i >= fc.blocks[b].leader; i--) {
      const Instruction& ins = f.at(i);
      if (ins.op != Opcode::Cmp) continue;
      Label l{fn, i};
      iv_dep = false;
      if (auto a = vfg.try_find(VfgNode{l, false, ins.dst->reg, false}))
        iv_dep = iv_dep || iv_reach[*a];
      if (ins.src->is_reg())
        if (auto c = vfg.try_find(VfgNode{l, false, ins.src->reg, false}))
          iv_dep = iv_dep || iv_reach[*c];
      break;
    }
    if (iv_dep) iv_branches.push_back(b);
  }

  bool f_d = false, f_c = false;
  for (const Cell& c : cells) {
    if (iv_reach[c.node]) f_d = true;
    for (uint32_t br : iv_branches)
      if (control_dependent(c.block, br)) f_c = true;
  }

  if (f_d && f_c) return LoopKind::NonOnce;
  if (f_d && !f_c) return LoopKind::BlOnce;
  if (!f_d && f_c) return LoopKind::RegOnce;
  return LoopKind::FullOnce;
}

const char* loop_kind_name(LoopKind k) {
  switch (k) {
    case LoopKind::NonOnce: return "non-once";
    case LoopKind::BlOnce: return "bl-once";
    case LoopKind::RegOnce: return "reg-once";
    case LoopKind::FullOnce: return "full-once";
  }
  return "?";
}

}  // namespace tirtaint
