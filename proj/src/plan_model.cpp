#include "tirtaint/plan_model.hpp"

#include <algorithm>
#include <deque>

#include "tirtaint/graph_util.hpp"

#include "reaching_defs.hpp"

namespace tirtaint {

namespace {

// Exit flavor of an original block: kExitRet when control can leave the
// function through a return (explicit, fall-off, or a conditional branch
// whose fallthrough is the function end), kExitEof for halt. Returns from
// the entry function with an empty call stack also end the program.
uint8_t block_exit_kind(const Program& p, const BasicBlock& b) {
  const Function& f = p.fn(b.fn);
  const Instruction& term = f.at(b.last);
  uint8_t kind = 0;
  if (term.op == Opcode::Halt) kind |= kExitEof;
  if (term.op == Opcode::Ret) kind |= kExitRet;
  if (b.last == f.size() && term.op != Opcode::Jmp && term.op != Opcode::Ret &&
      term.op != Opcode::Halt)
    kind |= kExitRet;  // fall off the end (jcc fallthrough included)
  if ((kind & kExitRet) && b.fn == p.entry) kind |= kExitEof;
  return kind;
}

struct ModelBuilder {
  const Program& p;
  const Cfg& cfg;
  const TaintConfig& config;
  const TracePlan& plan;
  PlanModel m;

  std::set<uint32_t> marked_blocks;  // global ids
  std::map<Label, std::vector<Token>> pre_records, post_records;

  uint32_t intern(const Token& t) {
    auto it = m.token_index.find(t);
    if (it != m.token_index.end()) return it->second;
    uint32_t id = static_cast<uint32_t>(m.tokens.size());
    m.tokens.push_back(t);
    m.token_index[t] = id;
    return id;
  }

  void build() {
    m.fn_skipped.assign(p.functions.size(), false);
    for (const auto& n : plan.skipped_functions)
      if (auto fi = p.find_function(n)) m.fn_skipped[*fi] = true;

    m.caller_blocks.assign(p.functions.size(), {});
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      const Function& f = p.functions[fi];
      const FunctionCfg& fc = cfg.per_fn[fi];
      for (uint32_t i = 1; i <= f.size(); i++) {
        if (f.at(i).op != Opcode::Call) continue;
        uint32_t blk = fc.blocks[fc.block_at(i)].id;
        m.caller_blocks[f.at(i).target].insert(blk);
        if (m.fn_skipped[fi]) m.skipped_tips.insert(blk);
      }
    }

    marked_blocks.insert(plan.blocks.begin(), plan.blocks.end());

    // loop regions and hoisted record points
    std::set<std::pair<Label, Register>> hoisted_points;
    for (const LoopDirective& d : plan.loops) {
      LoopRegion region;
      region.header_block = d.header_block;
      region.kind = d.kind;
      region.hoist_blocks = d.hoist_blocks;
      region.fn = cfg.block(d.header_block).fn;
      for (const RegPoint& rp : d.hoisted_regs) {
        Token t;
        t.label = rp.site;
        t.reg = rp.reg;
        t.post = rp.post;
        t.hoisted = true;
        t.loop_header = d.header_block;
        region.preheader_tokens.push_back(intern(t));
        hoisted_points.insert({rp.site, rp.reg});
      }
      if (d.hoist_blocks && d.hoisted_regs.empty()) {
        Token t;
        t.is_mark = true;
        t.preheader = true;
        t.loop_header = d.header_block;
        const BasicBlock& hb = cfg.block(d.header_block);
        t.label = Label{hb.fn, hb.leader};
        region.preheader_tokens.push_back(intern(t));
      }
      m.loop_by_header[d.header_block] = static_cast<uint32_t>(m.loops.size());
      m.loops.push_back(std::move(region));
    }

    for (const RegPoint& rp : plan.registers) {
      if (hoisted_points.count({rp.site, rp.reg})) continue;
      Token t;
      t.label = rp.site;
      t.reg = rp.reg;
      t.post = rp.post;
      uint32_t id = intern(t);
      (rp.post ? post_records : pre_records)[rp.site].push_back(m.tokens[id]);
    }
    for (auto* tbl : {&pre_records, &post_records})
      for (auto& [site, v] : *tbl) std::sort(v.begin(), v.end());

    // blocks silenced by block hoisting
    std::set<uint32_t> silenced;
    for (const LoopDirective& d : plan.loops)
      if (d.hoist_blocks)
        for (uint32_t b : loop_body_blocks(d.header_block)) silenced.insert(b);

    // reduced CFGs and block item layouts
    m.fns.resize(p.functions.size());
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      FnModel& fm = m.fns[fi];
      fm.rcfg.fn = fi;
      if (m.fn_skipped[fi]) continue;
      std::vector<uint32_t> removed = compute_taint_unchanged_blocks(p, fi, cfg, config);
      fm.rcfg = build_reduced_cfg(p, fi, cfg, removed);
      fm.items.assign(fm.rcfg.kept.size(), {});
      fm.marked.assign(fm.rcfg.kept.size(), false);
      fm.exit_kind.assign(fm.rcfg.kept.size(), 0);
      for (uint32_t pos = 0; pos < fm.rcfg.kept.size(); pos++) {
        uint32_t bid = fm.rcfg.kept[pos];
        const BasicBlock& b = cfg.block(bid);
        if (fm.rcfg.exits[pos]) {
          // the exit may sit in this block or in removed blocks behind it;
          // merge the flavors of every exit reachable token-silently
          fm.exit_kind[pos] = exit_kind_closure(fi, b);
        }
        bool mark = marked_blocks.count(bid) && !silenced.count(bid);
        fm.marked[pos] = mark;
        bool consolidated = false;
        if (mark) {
          for (uint32_t i = b.leader; i <= b.last && !consolidated; i++) {
            Label l{fi, i};
            if (pre_records.count(l) || post_records.count(l)) consolidated = true;
          }
        }
        auto& items = fm.items[pos];
        if (mark && !consolidated) {
          Token t;
          t.is_mark = true;
          t.label = Label{fi, b.leader};
          items.push_back({BlockItem::Kind::Token, intern(t), 0, b.leader});
        }
        for (uint32_t i = b.leader; i <= b.last; i++) {
          Label l{fi, i};
          if (auto it = pre_records.find(l); it != pre_records.end())
            for (const Token& t : it->second)
              items.push_back({BlockItem::Kind::Token, intern(t), 0, i});
          const Instruction& ins = p.fn(fi).at(i);
          if (ins.op == Opcode::Call)
            items.push_back({BlockItem::Kind::Call, 0, ins.target, i});
          if (auto it = post_records.find(l); it != post_records.end())
            for (const Token& t : it->second)
              items.push_back({BlockItem::Kind::Token, intern(t), 0, i});
        }
      }
    }

    finish_loop_regions();
    compute_fn_summaries();
    compute_decisions();
  }

  uint8_t exit_kind_closure(uint32_t fi, const BasicBlock& from) {
    // walk removed blocks reachable from `from` and OR their exit kinds
    const FunctionCfg& fc = cfg.per_fn[fi];
    uint32_t base = fc.blocks.front().id;
    const FnModel& fm = m.fns[fi];
    uint8_t kind = block_exit_kind(p, from);
    std::set<uint32_t> seen;
    std::deque<uint32_t> q;
    for (uint32_t s : from.succs) q.push_back(s - base);
    while (!q.empty()) {
      uint32_t b = q.front();
      q.pop_front();
      if (seen.count(b)) continue;
      seen.insert(b);
      if (fm.rcfg.pos_of(base + b)) continue;  // kept: stop
      kind |= block_exit_kind(p, fc.blocks[b]);
      for (uint32_t s : fc.blocks[b].succs) q.push_back(s - base);
    }
    return kind;
  }

  std::vector<uint32_t> loop_body_blocks(uint32_t header_block) {
    const BasicBlock& hb = cfg.block(header_block);
    auto loops = find_loops(p, hb.fn, cfg);
    const FunctionCfg& fc = cfg.per_fn[hb.fn];
    uint32_t base = fc.blocks.front().id;
    for (const LoopInfo& li : loops)
      if (base + li.header == header_block) {
        std::vector<uint32_t> out;
        for (uint32_t b : li.body) out.push_back(base + b);
        return out;
      }
    return {header_block};
  }

  void finish_loop_regions() {
    for (LoopRegion& r : m.loops) {
      r.body_blocks = loop_body_blocks(r.header_block);
      if (!r.hoist_blocks) continue;
      const FnModel& fm = m.fns[r.fn];
      std::set<uint32_t> body(r.body_blocks.begin(), r.body_blocks.end());
      std::set<uint32_t> body_pos;
      for (uint32_t pos = 0; pos < fm.rcfg.kept.size(); pos++)
        if (body.count(fm.rcfg.kept[pos])) body_pos.insert(pos);
      if (body_pos.empty()) {
        r.cycle_pos.clear();
        continue;
      }
      auto hpos = fm.rcfg.pos_of(r.header_block);
      uint32_t start = hpos && body_pos.count(*hpos) ? *hpos : *body_pos.begin();
      std::vector<uint32_t> order;
      std::set<uint32_t> seen;
      uint32_t cur = start;
      std::optional<uint32_t> exit_pos;
      bool exit_escapes = false;
      while (!seen.count(cur)) {
        seen.insert(cur);
        order.push_back(cur);
        std::optional<uint32_t> next;
        for (uint32_t s : fm.rcfg.succs[cur]) {
          if (body_pos.count(s))
            next = s;
          else
            exit_pos = s;
        }
        if (fm.rcfg.exits[cur]) exit_escapes = true;
        if (!next) break;
        cur = *next;
      }
      r.cycle_pos = std::move(order);
      r.exit_pos = exit_pos;
      r.exit_escapes = exit_escapes;
    }
  }

  FirstSet call_first(uint32_t fi, uint32_t callsite_instr, uint32_t callee) {
    // a call always produces an event: the callee's first token/tip, or the
    // return TIP naming the call block
    FirstSet out = m.fn_first[callee];
    bool ret_here = out.escapes;
    out.escapes = false;
    if (ret_here) {
      const FunctionCfg& fc = cfg.per_fn[fi];
      out.tips.insert(fc.blocks[fc.block_at(callsite_instr)].id);
    }
    return out;
  }

  // innermost hoist region containing a kept position (any region that
  // funnels preheader tokens or silences marks)
  std::optional<uint32_t> region_of(uint32_t fi, uint32_t pos) const {
    if (m.fns[fi].rcfg.kept.empty()) return std::nullopt;
    return m.region_of_block(m.fns[fi].rcfg.kept[pos]);
  }

  FirstSet first_from(uint32_t fi, uint32_t pos, uint32_t item_idx,
                      std::set<std::pair<uint32_t, uint32_t>>& visiting,
                      std::optional<uint32_t> from_region) {
    FirstSet out;
    const FnModel& fm = m.fns[fi];
    if (pos >= fm.items.size()) return out;
    if (item_idx == 0 && !visiting.insert({fi, pos}).second) return out;  // cycle

    // stepping into a block-hoisted region from outside emits its
    // preheader tokens first
    std::optional<uint32_t> region = region_of(fi, pos);
    if (item_idx == 0 && region && region != from_region) {
      const LoopRegion& r = m.loops[*region];
      if (!r.preheader_tokens.empty()) {
        out.tokens.insert(r.preheader_tokens.front());
        return out;
      }
    }

    const auto& items = fm.items[pos];
    for (uint32_t k = item_idx; k < items.size(); k++) {
      const BlockItem& it = items[k];
      if (it.kind == BlockItem::Kind::Token) {
        out.tokens.insert(it.token);
        return out;
      }
      out.merge(call_first(fi, it.instr, it.callee));
      return out;  // the call always emits before the walk continues
    }
    uint8_t exit = fm.exit_kind.empty() ? 0 : fm.exit_kind[pos];
    if (exit & kExitRet) out.escapes = true;
    if (exit & kExitEof) out.eof = true;
    for (uint32_t s : fm.rcfg.succs[pos]) {
      FirstSet f = first_from(fi, s, 0, visiting, region);
      out.merge(f);
    }
    return out;
  }

  FirstSet fn_entry_first(uint32_t fi) {
    FirstSet out;
    if (m.fn_skipped[fi]) {
      // internals emit only return TIPs from nested skipped calls
      out.tips.insert(m.skipped_tips.begin(), m.skipped_tips.end());
      out.escapes = true;
      return out;
    }
    const FnModel& fm = m.fns[fi];
    if (fm.rcfg.entry_exits || fm.rcfg.kept.empty()) out.escapes = true;
    for (uint32_t e : fm.rcfg.entry) {
      std::set<std::pair<uint32_t, uint32_t>> visiting;
      out.merge(first_from(fi, e, 0, visiting, std::nullopt));
    }
    return out;
  }

  void compute_fn_summaries() {
    m.fn_first.assign(p.functions.size(), {});
    bool changed = true;
    int guard = 0;
    while (changed && guard++ < 1000) {
      changed = false;
      for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
        FirstSet f = fn_entry_first(fi);
        if (!(f == m.fn_first[fi])) {
          m.fn_first[fi] = f;
          changed = true;
        }
      }
    }
  }

  // registers written by removed blocks reachable token-silently from a
  // local block (stops at kept blocks)
  uint8_t removed_clobber(uint32_t fi, uint32_t from_local) {
    const FunctionCfg& fc = cfg.per_fn[fi];
    uint32_t base = fc.blocks.front().id;
    const FnModel& fm = m.fns[fi];
    uint8_t mask = 0;
    std::set<uint32_t> seen;
    std::deque<uint32_t> q{from_local};
    ClobberMap clobbers = compute_clobbers(p);
    while (!q.empty()) {
      uint32_t b = q.front();
      q.pop_front();
      if (!seen.insert(b).second) continue;
      if (fm.rcfg.pos_of(base + b)) continue;  // kept: walked normally
      for (uint32_t i = fc.blocks[b].leader; i <= fc.blocks[b].last; i++) {
        RegEffects eff = reg_effects(p.fn(fi).at(i), clobbers);
        for (Register d : eff.defs) mask |= static_cast<uint8_t>(1u << d.index);
      }
      for (uint32_t s : fc.blocks[b].succs) q.push_back(s - base);
    }
    return mask;
  }

  void compute_decisions() {
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      FnModel& fm = m.fns[fi];
      fm.succ_first.assign(fm.rcfg.kept.size(), {});
      fm.succ_clobber.assign(fm.rcfg.kept.size(), {});
      if (!m.fn_skipped[fi] && !cfg.per_fn[fi].blocks.empty())
        fm.entry_clobber = removed_clobber(fi, 0);
      const FunctionCfg& fc = cfg.per_fn[fi];
      uint32_t base = fc.blocks.empty() ? 0 : fc.blocks.front().id;
      for (uint32_t pos = 0; pos < fm.rcfg.kept.size(); pos++) {
        auto& firsts = fm.succ_first[pos];
        std::optional<uint32_t> region = region_of(fi, pos);
        for (uint32_t s : fm.rcfg.succs[pos]) {
          std::set<std::pair<uint32_t, uint32_t>> visiting;
          firsts.push_back(first_from(fi, s, 0, visiting, region));
        }
        // per-edge clobber: union over original successors that reach the
        // reduced successor through removed blocks
        const BasicBlock& b = cfg.block(fm.rcfg.kept[pos]);
        uint8_t mask = 0;
        for (uint32_t os : b.succs)
          if (!fm.rcfg.pos_of(os)) mask |= removed_clobber(fi, os - base);
        fm.succ_clobber[pos].assign(fm.rcfg.succs[pos].size(), mask);
      }
    }
  }

  // kept positions on event-silent cycles (block-hoisted regions excluded;
  // calls always emit, so only call-free token-free cycles qualify)
  std::vector<std::pair<uint32_t, uint32_t>> silent_cycles() {
    std::vector<std::pair<uint32_t, uint32_t>> offenders;
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      const FnModel& fm = m.fns[fi];
      const uint32_t n = static_cast<uint32_t>(fm.rcfg.kept.size());
      if (!n) continue;
      std::set<uint32_t> in_hoisted;
      for (const LoopRegion& r : m.loops) {
        if (!r.hoist_blocks || r.fn != fi) continue;
        for (uint32_t b : r.body_blocks)
          if (auto pos = fm.rcfg.pos_of(b)) in_hoisted.insert(*pos);
      }
      std::vector<bool> silent(n, true);
      for (uint32_t pos = 0; pos < n; pos++)
        silent[pos] = fm.items[pos].empty();  // tokens and calls both emit
      std::vector<std::vector<uint32_t>> sg(n);
      for (uint32_t pos = 0; pos < n; pos++) {
        if (!silent[pos] || in_hoisted.count(pos)) continue;
        for (uint32_t s : fm.rcfg.succs[pos])
          if (silent[s] && !in_hoisted.count(s)) sg[pos].push_back(s);
      }
      SccResult scc = tarjan_scc(n, sg);
      std::vector<uint32_t> comp_size(scc.count, 0);
      std::vector<bool> comp_self(scc.count, false);
      std::vector<std::optional<uint32_t>> lowest(scc.count);
      for (uint32_t pos = 0; pos < n; pos++) {
        if (!silent[pos] || in_hoisted.count(pos)) continue;
        uint32_t c = scc.comp[pos];
        comp_size[c]++;
        for (uint32_t s : sg[pos])
          if (s == pos) comp_self[c] = true;
      }
      for (uint32_t pos = 0; pos < n; pos++) {
        if (!silent[pos] || in_hoisted.count(pos)) continue;
        uint32_t c = scc.comp[pos];
        if (comp_size[c] > 1 || comp_self[c])
          if (!lowest[c] || fm.rcfg.kept[pos] < fm.rcfg.kept[*lowest[c]]) lowest[c] = pos;
      }
      for (auto& sel : lowest)
        if (sel) offenders.push_back({fi, *sel});
    }
    return offenders;
  }

  // Can two option FirstSets be confused when reading the event stream?
  bool options_conflict(uint32_t fi, const FirstSet& a, const FirstSet& b) const {
    for (uint32_t t : a.tokens)
      if (b.tokens.count(t)) return true;
    for (uint32_t t : a.tips)
      if (b.tips.count(t)) return true;
    if (a.escapes && b.escapes) return true;
    if (a.eof && b.eof) return true;
    // an escaping return produces a TIP valued at some caller block
    auto wild_hits = [&](const FirstSet& esc, const FirstSet& other) {
      if (!esc.escapes) return false;
      for (uint32_t cb : m.caller_blocks[fi])
        if (other.tips.count(cb)) return true;
      return false;
    };
    return wild_hits(a, b) || wild_hits(b, a);
  }

  std::vector<std::pair<uint32_t, uint32_t>> ambiguous_decisions() {
    std::vector<std::pair<uint32_t, uint32_t>> out;
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      const FnModel& fm = m.fns[fi];
      for (uint32_t pos = 0; pos < fm.rcfg.kept.size(); pos++) {
        const auto& succs = fm.rcfg.succs[pos];
        const auto& firsts = fm.succ_first[pos];
        std::vector<FirstSet> options = firsts;
        if (fm.rcfg.exits[pos]) {
          FirstSet exit_opt;
          exit_opt.escapes = (fm.exit_kind[pos] & kExitRet) != 0;
          exit_opt.eof = (fm.exit_kind[pos] & kExitEof) != 0;
          options.push_back(exit_opt);
        }
        if (options.size() < 2) continue;
        if (auto region = region_of(fi, pos))
          if (m.loops[*region].kind == LoopKind::FullOnce) continue;
        bool bad = false;
        for (size_t a = 0; a < options.size() && !bad; a++)
          for (size_t b = a + 1; b < options.size() && !bad; b++)
            if (options_conflict(fi, options[a], options[b])) bad = true;
        if (bad) out.push_back({fi, pos});
        (void)succs;
      }
    }
    return out;
  }
};

}  // namespace

PlanModel build_plan_model(const Program& p, const Cfg& cfg, const TaintConfig& config,
                           const TracePlan& plan, bool validate) {
  ModelBuilder b{p, cfg, config, plan, {}, {}, {}, {}};
  b.build();
  if (validate) {
    auto cyc = b.silent_cycles();
    auto amb = b.ambiguous_decisions();
    if (!cyc.empty() || !amb.empty())
      throw AnalysisError("trace plan cannot support unambiguous replay");
  }
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    if (b.m.fn_skipped[fi]) continue;
    Vfg vfg = build_vfg(p, fi, cfg);
    MvsaResult mv = run_mvsa(p, fi, cfg);
    enrich_vfg(vfg, mv);
    MayTaintInfo may = compute_may_taint(p, cfg, config);
    mark_relevant_memory(vfg, p, cfg, config, may);
    for (uint32_t ni = 0; ni < vfg.nodes.size(); ni++)
      if (vfg.nodes[ni].is_mem && vfg.relevant_mem[ni])
        b.m.relevant_mem_sites.insert(vfg.nodes[ni].site);
    for (const auto& [key, v] : mv.known_in) b.m.known_in[key] = v;
    for (const auto& [key, v] : mv.known_out) b.m.known_out[key] = v;
  }
  return std::move(b.m);
}

void repair_plan(const Program& p, const Cfg& cfg, const TaintConfig& config,
                 TracePlan& plan) {
  for (int round = 0; round < 64; round++) {
    ModelBuilder b{p, cfg, config, plan, {}, {}, {}, {}};
    b.build();
    bool changed = false;

    auto add_mark = [&](uint32_t fi, uint32_t pos) {
      uint32_t bid = b.m.fns[fi].rcfg.kept[pos];
      if (std::find(plan.blocks.begin(), plan.blocks.end(), bid) == plan.blocks.end()) {
        plan.blocks.push_back(bid);
        changed = true;
      }
    };
    auto cancel_hoist_covering = [&](uint32_t bid) {
      for (LoopDirective& d : plan.loops) {
        if (!d.hoist_blocks) continue;
        auto body = b.loop_body_blocks(d.header_block);
        if (std::find(body.begin(), body.end(), bid) != body.end()) {
          d.hoist_blocks = false;
          changed = true;
          return true;
        }
      }
      return false;
    };

    for (auto [fi, pos] : b.silent_cycles()) add_mark(fi, pos);

    for (auto [fi, pos] : b.ambiguous_decisions()) {
      const FnModel& fm = b.m.fns[fi];
      for (uint32_t s : fm.rcfg.succs[pos]) {
        uint32_t sb = fm.rcfg.kept[s];
        if (!cancel_hoist_covering(sb)) add_mark(fi, s);
      }
    }

    if (!changed) {
      std::sort(plan.blocks.begin(), plan.blocks.end());
      plan.blocks.erase(std::unique(plan.blocks.begin(), plan.blocks.end()),
                        plan.blocks.end());
      return;
    }
  }
  throw AnalysisError("plan repair did not converge");
}

}  // namespace tirtaint
