#include <algorithm>
#include <deque>
#include <functional>

#include "reaching_defs.hpp"
#include "tirtaint/analysis.hpp"
#include "tirtaint/graph_util.hpp"

// Value-flow graph construction, must value-set analysis, may-taint
// relevance, and register-root identification.

namespace tirtaint {

uint32_t Vfg::find(const VfgNode& n) const {
  auto r = try_find(n);
  if (!r) throw AnalysisError("vfg node not found");
  return *r;
}

std::optional<uint32_t> Vfg::try_find(const VfgNode& n) const {
  for (uint32_t i = 0; i < nodes.size(); i++)
    if (nodes[i] == n) return i;
  return std::nullopt;
}

void Vfg::recompute_wccs() {
  std::vector<uint32_t> parent(nodes.size());
  for (uint32_t i = 0; i < parent.size(); i++) parent[i] = i;
  std::function<uint32_t(uint32_t)> find_root = [&](uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& e : edges) {
    uint32_t a = find_root(e.from), b = find_root(e.to);
    if (a != b) parent[a] = b;
  }
  wcc.assign(nodes.size(), 0);
  std::map<uint32_t, uint32_t> renumber;
  for (uint32_t i = 0; i < nodes.size(); i++) {
    uint32_t root = find_root(i);
    auto [it, fresh] = renumber.try_emplace(root, static_cast<uint32_t>(renumber.size()));
    wcc[i] = it->second;
  }
  wcc_count = static_cast<uint32_t>(renumber.size());
  value_preds.assign(nodes.size(), {});
  for (const auto& e : edges)
    if (e.kind == VfgEdgeKind::Value) value_preds[e.to].push_back(e.from);
}

namespace {

struct VfgBuilder {
  const Program& p;
  uint32_t fn;
  const Cfg& cfg;
  Vfg g;
  std::map<VfgNode, uint32_t> index;
  std::vector<uint64_t> known_value;

  uint32_t node(Label site, bool is_mem, Register reg, bool is_def,
                ValueKind kind = ValueKind::Computable) {
    VfgNode n{site, is_mem, reg, is_def};
    auto it = index.find(n);
    if (it != index.end()) return it->second;
    uint32_t id = static_cast<uint32_t>(g.nodes.size());
    g.nodes.push_back(n);
    g.kind.push_back(kind);
    known_value.push_back(0);
    index[n] = id;
    return id;
  }

  void value_edge(uint32_t from, uint32_t to) {
    g.edges.push_back({from, to, VfgEdgeKind::Value});
  }
  void addr_edge(uint32_t from, uint32_t to) {
    g.edges.push_back({from, to, VfgEdgeKind::Address});
  }

  void build() {
    g.fn = fn;
    const Function& f = p.fn(fn);
    const FunctionCfg& fc = cfg.per_fn[fn];
    ClobberMap clobbers = compute_clobbers(p);
    ReachingDefs rd(f, fc, clobbers);

    for (uint32_t i = 1; i <= f.size(); i++) {
      Label l{fn, i};
      const Instruction& ins = f.at(i);
      switch (ins.op) {
        case Opcode::Mov: {
          uint32_t def = node(l, false, ins.dst->reg, true);
          if (ins.src->is_reg()) {
            value_edge(node(l, false, ins.src->reg, false), def);
          } else {
            g.kind[def] = ValueKind::Known;
            known_value[def] = static_cast<uint64_t>(ins.src->value);
          }
          break;
        }
        case Opcode::Load: {
          uint32_t base = node(l, false, ins.src->reg, false);
          addr_edge(base, node(l, true, ins.src->reg, false));
          node(l, false, ins.dst->reg, true, ValueKind::Opaque);
          break;
        }
        case Opcode::Store: {
          uint32_t base = node(l, false, ins.dst->reg, false);
          addr_edge(base, node(l, true, ins.dst->reg, true));
          break;
        }
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor: {
          bool xor_self = ins.op == Opcode::Xor && ins.src->is_reg() &&
                          ins.src->reg == ins.dst->reg;
          uint32_t def = node(l, false, ins.dst->reg, true);
          if (xor_self) {
            g.kind[def] = ValueKind::Known;
            known_value[def] = 0;
            break;
          }
          value_edge(node(l, false, ins.dst->reg, false), def);
          if (ins.src->is_reg()) value_edge(node(l, false, ins.src->reg, false), def);
          break;
        }
        case Opcode::Cmp:
          node(l, false, ins.dst->reg, false);
          if (ins.src->is_reg()) node(l, false, ins.src->reg, false);
          break;
        case Opcode::Call: {
          // clobber definitions plus argument-register uses
          ClobberMap::value_type cl = clobbers[ins.target];
          for (int r = 0; r < kNumRegisters; r++)
            if (cl[r]) node(l, false, Register{static_cast<uint8_t>(r)}, true,
                            ValueKind::Opaque);
          for (int r = 0; r < 3; r++)
            node(l, false, Register{static_cast<uint8_t>(r)}, false);
          break;
        }
        case Opcode::Push: {
          Register sp{kStackRegister};
          uint32_t base = node(l, false, sp, false);
          addr_edge(base, node(l, true, sp, true));
          if (ins.src->is_reg()) node(l, false, ins.src->reg, false);
          value_edge(base, node(l, false, sp, true));  // stride update
          break;
        }
        case Opcode::Pop: {
          Register sp{kStackRegister};
          uint32_t base = node(l, false, sp, false);
          addr_edge(base, node(l, true, sp, false));
          node(l, false, ins.dst->reg, true, ValueKind::Opaque);
          value_edge(base, node(l, false, sp, true));
          break;
        }
        case Opcode::TaintSource:
        case Opcode::TaintSink:
          if (ins.dst->is_mem()) {
            uint32_t base = node(l, false, ins.dst->reg, false);
            addr_edge(base, node(l, true, ins.dst->reg, false));
          } else {
            node(l, false, ins.dst->reg, false);
          }
          break;
        default:
          break;
      }
    }

    // def-use value edges from reaching definitions
    const uint32_t before_entry_chain = static_cast<uint32_t>(g.nodes.size());
    for (uint32_t ni = 0; ni < before_entry_chain; ni++) {
      VfgNode n = g.nodes[ni];
      if (n.is_mem || n.is_def) continue;
      for (uint32_t d : rd.at(n.site.idx, n.reg)) {
        if (d == kEntryDef) continue;
        VfgNode dn{Label{fn, d}, false, n.reg, true};
        if (auto di = g.try_find(dn)) value_edge(*di, ni);
      }
    }

    // entry-value uses: chain from a dominating first use when one exists
    DomTree dom = fn_dominators(fc);
    for (int r = 0; r < kNumRegisters; r++) {
      Register reg{static_cast<uint8_t>(r)};
      std::vector<uint32_t> entry_uses;
      for (uint32_t ni = 0; ni < g.nodes.size(); ni++) {
        const VfgNode& n = g.nodes[ni];
        if (n.is_mem || n.is_def || !(n.reg == reg)) continue;
        const auto& defs = rd.at(n.site.idx, reg);
        if (std::find(defs.begin(), defs.end(), kEntryDef) != defs.end())
          entry_uses.push_back(ni);
      }
      if (entry_uses.empty()) continue;
      auto site_dominates = [&](Label a, Label b) {
        uint32_t ba = fc.block_at(a.idx), bb = fc.block_at(b.idx);
        if (ba == bb) return a.idx <= b.idx;
        return dom.dominates(ba, bb);
      };
      std::optional<uint32_t> root;
      for (uint32_t cand : entry_uses) {
        bool all = true;
        for (uint32_t other : entry_uses)
          if (!site_dominates(g.nodes[cand].site, g.nodes[other].site)) {
            all = false;
            break;
          }
        if (all) {
          root = cand;
          break;
        }
      }
      if (root) {
        g.kind[*root] = ValueKind::Opaque;
        for (uint32_t u : entry_uses)
          if (u != *root) value_edge(*root, u);
      } else {
        for (uint32_t u : entry_uses) g.kind[u] = ValueKind::Opaque;
      }
    }

    g.relevant_mem.assign(g.nodes.size(), false);
    g.recompute_wccs();
  }

  DomTree fn_dominators(const FunctionCfg& fc) {
    std::vector<std::vector<uint32_t>> succs(fc.blocks.size());
    uint32_t base = fc.blocks.empty() ? 0 : fc.blocks.front().id;
    for (uint32_t b = 0; b < fc.blocks.size(); b++)
      for (uint32_t s : fc.blocks[b].succs) succs[b].push_back(s - base);
    return compute_dominators(static_cast<uint32_t>(fc.blocks.size()), 0, succs);
  }
};

}  // namespace

Vfg build_vfg(const Program& p, uint32_t fn, const Cfg& cfg) {
  VfgBuilder b{p, fn, cfg, {}, {}, {}};
  b.build();
  b.g.known_values_ = std::move(b.known_value);
  return std::move(b.g);
}

// ---- MVSA ----

namespace {

struct MvsaState {
  std::array<LatticeValue, kNumRegisters> regs;
  std::map<uint64_t, LatticeValue> mem;  // only Known entries are stored
  bool visited = false;

  static constexpr size_t kMemCap = 64;

  void clear_mem() { mem.clear(); }

  void set_mem(uint64_t addr, LatticeValue v) {
    if (!v.is_known()) {
      mem.erase(addr);
      return;
    }
    mem[addr] = v;
    if (mem.size() > kMemCap) mem.clear();
  }

  LatticeValue get_mem(uint64_t addr) const {
    auto it = mem.find(addr);
    return it == mem.end() ? LatticeValue::bottom() : it->second;
  }

  bool meet_from(const MvsaState& o) {
    if (!visited) {
      *this = o;
      visited = true;
      return true;
    }
    bool changed = false;
    for (int r = 0; r < kNumRegisters; r++) {
      LatticeValue m = regs[r].meet(o.regs[r]);
      if (!(m == regs[r])) {
        regs[r] = m;
        changed = true;
      }
    }
    for (auto it = mem.begin(); it != mem.end();) {
      auto o_it = o.mem.find(it->first);
      if (o_it == o.mem.end() || !(o_it->second == it->second)) {
        it = mem.erase(it);
        changed = true;
      } else {
        ++it;
      }
    }
    return changed;
  }
};

std::vector<bool> functions_with_stores(const Program& p) {
  std::vector<bool> has(p.functions.size(), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      if (has[fi]) continue;
      for (const auto& ins : p.functions[fi].instrs) {
        bool s = ins.op == Opcode::Store || ins.op == Opcode::Push ||
                 ins.op == Opcode::Pop ||
                 (ins.op == Opcode::Call && has[ins.target]);
        if (s) {
          has[fi] = true;
          changed = true;
          break;
        }
      }
    }
  }
  return has;
}

struct MvsaRunner {
  const Program& p;
  uint32_t fn;
  const Cfg& cfg;
  ClobberMap clobbers;
  std::vector<bool> fn_stores;
  MvsaResult result;

  MvsaRunner(const Program& prog, uint32_t f, const Cfg& c)
      : p(prog), fn(f), cfg(c), clobbers(compute_clobbers(prog)),
        fn_stores(functions_with_stores(prog)) {}

  void transfer(const Instruction& ins, MvsaState& st) {
    auto src_val = [&](const Operand& o) {
      return o.is_reg() ? st.regs[o.reg.index]
                        : LatticeValue::known(static_cast<uint64_t>(o.value));
    };
    switch (ins.op) {
      case Opcode::Mov:
        st.regs[ins.dst->reg.index] = src_val(*ins.src);
        break;
      case Opcode::Load: {
        LatticeValue base = st.regs[ins.src->reg.index];
        st.regs[ins.dst->reg.index] =
            base.is_known()
                ? st.get_mem(base.value + static_cast<uint64_t>(ins.src->value))
                : LatticeValue::bottom();
        break;
      }
      case Opcode::Store: {
        LatticeValue base = st.regs[ins.dst->reg.index];
        if (base.is_known())
          st.set_mem(base.value + static_cast<uint64_t>(ins.dst->value),
                     src_val(*ins.src));
        else
          st.clear_mem();
        break;
      }
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::And:
      case Opcode::Or:
      case Opcode::Xor: {
        bool xor_self = ins.op == Opcode::Xor && ins.src->is_reg() &&
                        ins.src->reg == ins.dst->reg;
        if (xor_self) {
          st.regs[ins.dst->reg.index] = LatticeValue::known(0);
          break;
        }
        LatticeValue a = st.regs[ins.dst->reg.index];
        LatticeValue b = src_val(*ins.src);
        if (a.is_known() && b.is_known()) {
          uint64_t r = 0;
          switch (ins.op) {
            case Opcode::Add: r = a.value + b.value; break;
            case Opcode::Sub: r = a.value - b.value; break;
            case Opcode::And: r = a.value & b.value; break;
            case Opcode::Or: r = a.value | b.value; break;
            case Opcode::Xor: r = a.value ^ b.value; break;
            default: break;
          }
          st.regs[ins.dst->reg.index] = LatticeValue::known(r);
        } else {
          st.regs[ins.dst->reg.index] = LatticeValue::bottom();
        }
        break;
      }
      case Opcode::Push: {
        LatticeValue sp = st.regs[kStackRegister];
        LatticeValue v = src_val(*ins.src);
        if (sp.is_known()) {
          st.set_mem(sp.value - 1, v);
          st.regs[kStackRegister] = LatticeValue::known(sp.value - 1);
        } else {
          st.clear_mem();
          st.regs[kStackRegister] = LatticeValue::bottom();
        }
        break;
      }
      case Opcode::Pop: {
        LatticeValue sp = st.regs[kStackRegister];
        if (sp.is_known()) {
          st.regs[ins.dst->reg.index] = st.get_mem(sp.value);
          st.regs[kStackRegister] = LatticeValue::known(sp.value + 1);
        } else {
          st.regs[ins.dst->reg.index] = LatticeValue::bottom();
          st.regs[kStackRegister] = LatticeValue::bottom();
        }
        break;
      }
      case Opcode::Call:
        for (int r = 0; r < kNumRegisters; r++)
          if (clobbers[ins.target][r]) st.regs[r] = LatticeValue::bottom();
        if (fn_stores[ins.target]) st.clear_mem();
        break;
      default:
        break;
    }
  }

  void run() {
    const Function& f = p.fn(fn);
    const FunctionCfg& fc = cfg.per_fn[fn];
    const uint32_t nb = static_cast<uint32_t>(fc.blocks.size());
    std::vector<MvsaState> in(nb), out(nb);
    in[0].visited = true;
    for (int r = 0; r < kNumRegisters; r++) in[0].regs[r] = LatticeValue::bottom();
    uint32_t base = fc.blocks.front().id;

    std::deque<uint32_t> work{0};
    std::vector<bool> queued(nb, false);
    queued[0] = true;
    while (!work.empty()) {
      uint32_t b = work.front();
      work.pop_front();
      queued[b] = false;
      MvsaState st = in[b];
      for (uint32_t i = fc.blocks[b].leader; i <= fc.blocks[b].last; i++)
        transfer(f.at(i), st);
      bool out_changed = !out[b].visited;
      if (out[b].visited) {
        // exact state comparison
        out_changed = !(out[b].regs == st.regs && out[b].mem == st.mem);
      }
      st.visited = true;
      if (out_changed) {
        out[b] = st;
        for (uint32_t s : fc.blocks[b].succs) {
          uint32_t sl = s - base;
          if (in[sl].meet_from(st) && !queued[sl]) {
            queued[sl] = true;
            work.push_back(sl);
          }
        }
      }
    }

    // final walk: record known facts and must-alias pairs
    ClobberMap cl = clobbers;
    ReachingDefs rdefs(f, fc, cl);
    for (uint32_t b = 0; b < nb; b++) {
      if (!in[b].visited) continue;
      MvsaState st = in[b];
      for (uint32_t i = fc.blocks[b].leader; i <= fc.blocks[b].last; i++) {
        Label l{fn, i};
        for (int r = 0; r < kNumRegisters; r++)
          if (st.regs[r].is_known())
            result.known_in[{l, Register{static_cast<uint8_t>(r)}}] = st.regs[r].value;
        const Instruction& ins = f.at(i);
        transfer(ins, st);
        for (int r = 0; r < kNumRegisters; r++)
          if (st.regs[r].is_known())
            result.known_out[{l, Register{static_cast<uint8_t>(r)}}] = st.regs[r].value;
        // must-alias: a freshly defined known value matching another
        // known register yields a value edge between the definitions
        RegEffects eff = reg_effects(ins, cl);
        for (Register d : eff.defs) {
          if (!st.regs[d.index].is_known()) continue;
          uint64_t v = st.regs[d.index].value;
          for (int x = 0; x < kNumRegisters; x++) {
            Register xr{static_cast<uint8_t>(x)};
            if (xr == d || !st.regs[x].is_known() || st.regs[x].value != v) continue;
            for (uint32_t xs : rdefs.at(i, xr)) {
              if (xs == kEntryDef) continue;
              result.alias_edges.push_back(
                  {VfgNode{Label{fn, xs}, false, xr, true}, VfgNode{l, false, d, true}});
            }
          }
        }
      }
    }
  }
};

}  // namespace

MvsaResult run_mvsa(const Program& p, uint32_t fn, const Cfg& cfg) {
  MvsaRunner r(p, fn, cfg);
  r.run();
  return std::move(r.result);
}

void enrich_vfg(Vfg& vfg, const MvsaResult& mvsa) {
  for (const auto& [from, to] : mvsa.alias_edges) {
    auto fi = vfg.try_find(from);
    auto ti = vfg.try_find(to);
    if (fi && ti) vfg.edges.push_back({*fi, *ti, VfgEdgeKind::Value});
  }
  for (uint32_t i = 0; i < vfg.nodes.size(); i++) {
    const VfgNode& n = vfg.nodes[i];
    if (n.is_mem) continue;
    const auto& table = n.is_def ? mvsa.known_out : mvsa.known_in;
    auto it = table.find({n.site, n.reg});
    if (it != table.end()) {
      vfg.kind[i] = ValueKind::Known;
      vfg.known_values_[i] = it->second;
    }
  }
  vfg.recompute_wccs();
}

// ---- may-taint ----

MayTaintInfo compute_may_taint(const Program& p, const Cfg& cfg,
                               const TaintConfig& config) {
  MayTaintInfo info;
  info.reg.assign(p.functions.size(), {});
  info.summarized_fn.assign(p.functions.size(), false);
  for (uint32_t fi = 0; fi < p.functions.size(); fi++)
    if (config.summaries.count(p.functions[fi].name)) info.summarized_fn[fi] = true;

  if (config.implicit_control_taint) {
    info.mem_top = true;
    for (auto& regs : info.reg) regs.fill(true);
    return info;
  }

  std::vector<MvsaResult> mvsa(p.functions.size());
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) mvsa[fi] = run_mvsa(p, fi, cfg);

  auto known_addr = [&](uint32_t fi, Label l, const Operand& m) -> std::optional<uint64_t> {
    auto it = mvsa[fi].known_in.find({l, m.reg});
    if (it == mvsa[fi].known_in.end()) return std::nullopt;
    return it->second + static_cast<uint64_t>(m.value);
  };

  for (uint64_t a : config.pretainted_mem) info.mem_set.insert(a);
  for (const auto& s : config.sources) {
    if (!s.is_mem) {
      info.reg[s.site.fn][s.reg.index] = true;
    } else {
      const Instruction& ins = p.at(s.site);
      const Operand* m = nullptr;
      if (ins.dst && ins.dst->is_mem()) m = &*ins.dst;
      if (ins.src && ins.src->is_mem()) m = &*ins.src;
      if (m) {
        if (auto a = known_addr(s.site.fn, s.site, *m))
          info.mem_set.insert(*a);
        else
          info.mem_top = true;
      } else {
        info.mem_top = true;  // push/pop slot at dynamic address
      }
    }
  }

  auto add_mem = [&](std::optional<uint64_t> addr) {
    if (!addr) {
      info.mem_top = true;
      return;
    }
    info.mem_set.insert(*addr);
    if (info.mem_set.size() > 128) {
      info.mem_top = true;
      info.mem_set.clear();
    }
  };

  bool changed = true;
  while (changed) {
    changed = false;
    auto mark = [&](uint32_t fi, Register r) {
      if (!info.reg[fi][r.index]) {
        info.reg[fi][r.index] = true;
        changed = true;
      }
    };
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      if (info.summarized_fn[fi]) continue;  // taint effects replaced by the rule
      const Function& f = p.functions[fi];
      for (uint32_t i = 1; i <= f.size(); i++) {
        const Instruction& ins = f.at(i);
        Label l{fi, i};
        switch (ins.op) {
          case Opcode::Mov:
            if (ins.src->is_reg() && info.reg[fi][ins.src->reg.index])
              mark(fi, ins.dst->reg);
            break;
          case Opcode::Add:
          case Opcode::Sub:
          case Opcode::And:
          case Opcode::Or:
          case Opcode::Xor:
            if (ins.src->is_reg() && info.reg[fi][ins.src->reg.index])
              mark(fi, ins.dst->reg);
            break;
          case Opcode::Load:
            if (info.mem_may_overlap(known_addr(fi, l, *ins.src)))
              mark(fi, ins.dst->reg);
            break;
          case Opcode::Store:
            if (ins.src->is_reg() && info.reg[fi][ins.src->reg.index]) {
              bool was_top = info.mem_top;
              size_t n = info.mem_set.size();
              add_mem(known_addr(fi, l, *ins.dst));
              if (info.mem_top != was_top || info.mem_set.size() != n) changed = true;
            }
            break;
          case Opcode::Push:
            if (ins.src->is_reg() && info.reg[fi][ins.src->reg.index]) {
              bool was_top = info.mem_top;
              size_t n = info.mem_set.size();
              auto sp = mvsa[fi].known_in.find({l, Register{kStackRegister}});
              add_mem(sp == mvsa[fi].known_in.end()
                          ? std::nullopt
                          : std::optional<uint64_t>(sp->second - 1));
              if (info.mem_top != was_top || info.mem_set.size() != n) changed = true;
            }
            break;
          case Opcode::Pop: {
            auto sp = mvsa[fi].known_in.find({l, Register{kStackRegister}});
            std::optional<uint64_t> a;
            if (sp != mvsa[fi].known_in.end()) a = sp->second;
            if (info.mem_may_overlap(a)) mark(fi, ins.dst->reg);
            break;
          }
          case Opcode::Call: {
            uint32_t g = ins.target;
            if (info.summarized_fn[g]) {
              const Summary& s = config.summaries.at(p.functions[g].name);
              if (!s.dst.is_mem) {
                if (s.kind != SummaryKind::Sanitize && s.src && !s.src->is_mem &&
                    info.reg[fi][s.src->reg.index])
                  mark(fi, s.dst.reg);
              } else if (s.kind != SummaryKind::Sanitize) {
                if ((info.mem_top || !info.mem_set.empty()) && !info.mem_top) {
                  info.mem_top = true;
                  changed = true;
                }
              }
            } else {
              for (int r = 0; r < kNumRegisters; r++) {
                Register reg{static_cast<uint8_t>(r)};
                if (info.reg[fi][r] && !info.reg[g][r]) mark(g, reg);
                if (info.reg[g][r] && !info.reg[fi][r]) mark(fi, reg);
              }
            }
            break;
          }
          default:
            break;
        }
      }
    }
  }
  return info;
}

void mark_relevant_memory(Vfg& vfg, const Program& p, const Cfg& cfg,
                          const TaintConfig& config, const MayTaintInfo& may) {
  (void)cfg;
  uint32_t fi = vfg.fn;
  vfg.relevant_mem.assign(vfg.nodes.size(), false);
  vfg.needed_use_.assign(vfg.nodes.size(), false);

  auto node_known_addr = [&](uint32_t base_use, int64_t disp) -> std::optional<uint64_t> {
    if (vfg.kind[base_use] != ValueKind::Known) return std::nullopt;
    return vfg.known_values_[base_use] + static_cast<uint64_t>(disp);
  };

  for (uint32_t ni = 0; ni < vfg.nodes.size(); ni++) {
    const VfgNode& n = vfg.nodes[ni];
    if (!n.is_mem) continue;
    const Instruction& ins = p.at(n.site);
    uint32_t base_use = vfg.find(VfgNode{n.site, false, n.reg, false});
    int64_t disp = 0;
    if (ins.dst && ins.dst->is_mem()) disp = ins.dst->value;
    if (ins.src && ins.src->is_mem()) disp = ins.src->value;
    bool relevant = false;
    switch (ins.op) {
      case Opcode::Load:
      case Opcode::Pop:
        relevant = may.mem_may_overlap(node_known_addr(base_use, disp));
        break;
      case Opcode::Store:
      case Opcode::Push: {
        const Operand& v = *ins.src;
        if (v.is_reg())
          relevant = may.reg[fi][v.reg.index];
        else
          relevant = may.mem_may_overlap(node_known_addr(base_use, disp));
        break;
      }
      case Opcode::TaintSource:
      case Opcode::TaintSink:
        relevant = true;
        break;
      default:
        break;
    }
    if (config.is_source(n.site) || config.is_sink(n.site)) relevant = true;
    if (relevant) {
      vfg.relevant_mem[ni] = true;
      vfg.needed_use_[base_use] = true;
    }
  }

  // summarized calls with memory rules need their argument registers
  const Function& f = p.fn(fi);
  for (uint32_t i = 1; i <= f.size(); i++) {
    const Instruction& ins = f.at(i);
    if (ins.op != Opcode::Call) continue;
    auto it = config.summaries.find(p.functions[ins.target].name);
    if (it == config.summaries.end() || !it->second.dst.is_mem) continue;
    for (int r = 0; r < 3; r++)
      if (auto u = vfg.try_find(
              VfgNode{Label{fi, i}, false, Register{static_cast<uint8_t>(r)}, false}))
        vfg.needed_use_[*u] = true;
  }
}

std::vector<RegPoint> identify_registers(const Vfg& vfg) {
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
    if (vfg.kind[n] == ValueKind::Known) continue;  // statically derivable
    for (uint32_t prd : vfg.value_preds[n])
      if (!needed[prd]) {
        needed[prd] = true;
        work.push_back(prd);
      }
  }
  std::vector<RegPoint> out;
  for (uint32_t i = 0; i < vfg.nodes.size(); i++) {
    if (!needed[i] || vfg.kind[i] != ValueKind::Opaque) continue;
    const VfgNode& n = vfg.nodes[i];
    out.push_back(RegPoint{n.site, n.reg, n.is_def});
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace tirtaint
