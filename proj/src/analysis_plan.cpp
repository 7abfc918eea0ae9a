#include <algorithm>
#include <deque>
#include <set>

#include <json.hpp>

#include "tirtaint/analysis.hpp"
#include "tirtaint/plan_model.hpp"

// Trace-plan composition: register roots, block selection, function
// elimination, loop hoisting, and the replay-disambiguation repair pass.

namespace tirtaint {

namespace {

// every memory-operand base register occurrence, with use polarity
std::vector<RegPoint> all_memory_registers(const Program& p, uint32_t fn) {
  std::vector<RegPoint> out;
  const Function& f = p.fn(fn);
  for (uint32_t i = 1; i <= f.size(); i++) {
    const Instruction& ins = f.at(i);
    Label l{fn, i};
    if (ins.op == Opcode::Load) out.push_back({l, ins.src->reg, false});
    if (ins.op == Opcode::Store) out.push_back({l, ins.dst->reg, false});
    if (ins.op == Opcode::Push || ins.op == Opcode::Pop)
      out.push_back({l, Register{kStackRegister}, false});
  }
  return out;
}

std::vector<uint32_t> all_branch_targets(const Program& p, uint32_t fn, const Cfg& cfg) {
  std::vector<uint32_t> out;
  const FunctionCfg& fc = cfg.per_fn[fn];
  for (const auto& b : fc.blocks) {
    const Instruction& term = p.fn(fn).at(b.last);
    if (term.op != Opcode::Jcc) continue;
    for (uint32_t s : b.succs) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool reg_defined_in_blocks(const Program& p, uint32_t fn, const Cfg& cfg,
                           const std::set<uint32_t>& body_local, Register r) {
  const FunctionCfg& fc = cfg.per_fn[fn];
  for (uint32_t b : body_local) {
    for (uint32_t i = fc.blocks[b].leader; i <= fc.blocks[b].last; i++) {
      const Instruction& ins = p.fn(fn).at(i);
      switch (ins.op) {
        case Opcode::Mov:
        case Opcode::Load:
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor:
          if (ins.dst->reg == r) return true;
          break;
        case Opcode::Pop:
          if (ins.dst->reg == r || r == Register{kStackRegister}) return true;
          break;
        case Opcode::Push:
          if (r == Register{kStackRegister}) return true;
          break;
        case Opcode::Call:
          return true;  // conservative: any call may clobber
        default:
          break;
      }
    }
  }
  return false;
}

struct PlanBuilder {
  const Program& p;
  const Cfg& cfg;
  TaintConfig config;  // bound copy
  PlanOptions options;
  TracePlan plan;

  PlanBuilder(const Program& prog, const Cfg& c, const TaintConfig& tc,
              const PlanOptions& opts)
      : p(prog), cfg(c), config(tc), options(opts) {
    config.bind(p);
    plan.options = opts;
  }

  void build() {
    plan.skipped_functions = eliminate_functions(p, cfg, config);
    std::set<std::string> skipped(plan.skipped_functions.begin(),
                                  plan.skipped_functions.end());
    MayTaintInfo may = compute_may_taint(p, cfg, config);

    std::vector<Vfg> vfgs(p.functions.size());
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      if (skipped.count(p.functions[fi].name)) continue;
      vfgs[fi] = build_vfg(p, fi, cfg);
      MvsaResult mv = run_mvsa(p, fi, cfg);
      enrich_vfg(vfgs[fi], mv);
      mark_relevant_memory(vfgs[fi], p, cfg, config, may);

      if (options.reg_opt) {
        auto roots = identify_registers(vfgs[fi]);
        plan.registers.insert(plan.registers.end(), roots.begin(), roots.end());
      } else {
        // no root elimination: trace every relevant memory register in place
        for (uint32_t ni = 0; ni < vfgs[fi].nodes.size(); ni++) {
          const VfgNode& n = vfgs[fi].nodes[ni];
          if (n.is_mem && vfgs[fi].relevant_mem[ni])
            plan.registers.push_back({n.site, n.reg, false});
        }
        for (uint32_t i = 1; i <= p.fn(fi).size(); i++) {
          const Instruction& ins = p.fn(fi).at(i);
          if (ins.op != Opcode::Call) continue;
          auto it = config.summaries.find(p.functions[ins.target].name);
          if (it == config.summaries.end() || !it->second.dst.is_mem) continue;
          for (int r = 0; r < 3; r++)
            plan.registers.push_back({Label{fi, i}, Register{static_cast<uint8_t>(r)}, false});
        }
      }

      if (options.bl_opt) {
        std::vector<uint32_t> removed = compute_taint_unchanged_blocks(p, fi, cfg, config);
        ReducedCfg rcfg = build_reduced_cfg(p, fi, cfg, removed);
        auto marks = select_target_blocks(rcfg);
        plan.blocks.insert(plan.blocks.end(), marks.begin(), marks.end());
      } else {
        auto marks = all_branch_targets(p, fi, cfg);
        plan.blocks.insert(plan.blocks.end(), marks.begin(), marks.end());
      }
    }

    if (options.loop_opt) plan_loops(may, vfgs, skipped);

    std::sort(plan.registers.begin(), plan.registers.end());
    plan.registers.erase(std::unique(plan.registers.begin(), plan.registers.end()),
                         plan.registers.end());
    std::sort(plan.blocks.begin(), plan.blocks.end());
    plan.blocks.erase(std::unique(plan.blocks.begin(), plan.blocks.end()),
                      plan.blocks.end());

    repair_plan(p, cfg, config, plan);
  }

  void plan_loops(const MayTaintInfo& may, const std::vector<Vfg>& vfgs,
                  const std::set<std::string>& skipped) {
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      if (skipped.count(p.functions[fi].name)) continue;
      const FunctionCfg& fc = cfg.per_fn[fi];
      if (fc.blocks.empty()) continue;
      uint32_t base = fc.blocks.front().id;
      auto loops = find_loops(p, fi, cfg);
      // outermost first: larger bodies take priority for hoisting
      std::sort(loops.begin(), loops.end(),
                [](const LoopInfo& a, const LoopInfo& b) {
                  return a.body.size() > b.body.size();
                });
      std::set<std::pair<Label, Register>> consumed;
      for (const LoopInfo& li : loops) {
        LoopDirective d;
        d.header_block = base + li.header;
        d.kind = classify_loop(li, vfgs[fi], p, fi, cfg, config, may);
        std::set<uint32_t> body_local(li.body.begin(), li.body.end());

        // register hoisting: planned pre-value records whose register is
        // never written inside the loop hold the same value every iteration
        if (d.kind == LoopKind::RegOnce || d.kind == LoopKind::FullOnce) {
          for (const RegPoint& rp : plan.registers) {
            if (rp.site.fn != fi || rp.post) continue;
            if (consumed.count({rp.site, rp.reg})) continue;
            if (!body_local.count(fc.block_at(rp.site.idx))) continue;
            if (reg_defined_in_blocks(p, fi, cfg, body_local, rp.reg)) continue;
            d.hoisted_regs.push_back(rp);
          }
        }

        if (d.kind == LoopKind::BlOnce || d.kind == LoopKind::FullOnce)
          d.hoist_blocks = true;
        if (d.kind == LoopKind::FullOnce && !full_once_eligible(fi, li, d, vfgs[fi])) {
          d.hoist_blocks = false;
          d.hoisted_regs.clear();
        }

        if (d.hoisted_regs.empty() && !d.hoist_blocks && d.kind == LoopKind::NonOnce)
          continue;  // nothing to record for plain loops
        for (const RegPoint& rp : d.hoisted_regs) consumed.insert({rp.site, rp.reg});
        plan.loops.push_back(std::move(d));
      }
    }
  }

  // Exactness conditions for walking a loop body once: every planned point
  // hoistable, no loads or calls, at most one distinct memory write
  // operand, every stored or defined value drawn from loop-invariant
  // sources, no sinks or sources, and no value needed after the loop.
  bool full_once_eligible(uint32_t fi, const LoopInfo& li, const LoopDirective& d,
                          const Vfg& vfg) {
    const FunctionCfg& fc = cfg.per_fn[fi];
    std::set<uint32_t> body_local(li.body.begin(), li.body.end());

    // the kept body blocks must form one simple cycle with one exit, so a
    // structural walk can stand in for the missing per-iteration events
    {
      uint32_t base = fc.blocks.front().id;
      std::vector<uint32_t> removed = compute_taint_unchanged_blocks(p, fi, cfg, config);
      ReducedCfg rcfg = build_reduced_cfg(p, fi, cfg, removed);
      std::set<uint32_t> body_pos;
      for (uint32_t pos = 0; pos < rcfg.kept.size(); pos++) {
        uint32_t local = rcfg.kept[pos] - base;
        if (body_local.count(local)) body_pos.insert(pos);
      }
      uint32_t exit_edges = 0;
      for (uint32_t pos : body_pos) {
        uint32_t inside = 0;
        for (uint32_t s : rcfg.succs[pos]) {
          if (body_pos.count(s))
            inside++;
          else
            exit_edges++;
        }
        if (rcfg.exits[pos]) exit_edges++;
        if (inside > 1) return false;
      }
      if (exit_edges > 1) return false;
      // entries into the body from outside must target a single position
      std::set<uint32_t> entries;
      for (uint32_t pos = 0; pos < rcfg.kept.size(); pos++) {
        if (body_pos.count(pos)) continue;
        for (uint32_t s : rcfg.succs[pos])
          if (body_pos.count(s)) entries.insert(s);
      }
      for (uint32_t e : rcfg.entry)
        if (body_pos.count(e)) entries.insert(e);
      if (entries.size() > 1) return false;
    }
    std::set<std::pair<Label, Register>> hoisted;
    for (const RegPoint& rp : d.hoisted_regs) hoisted.insert({rp.site, rp.reg});
    for (const RegPoint& rp : plan.registers) {
      if (rp.site.fn != fi) continue;
      if (!body_local.count(fc.block_at(rp.site.idx))) continue;
      if (!hoisted.count({rp.site, rp.reg})) return false;  // per-iteration record
    }

    std::set<Register> defined;
    for (uint32_t b : body_local)
      for (uint32_t i = fc.blocks[b].leader; i <= fc.blocks[b].last; i++) {
        const Instruction& ins = p.fn(fi).at(i);
        switch (ins.op) {
          case Opcode::Mov:
          case Opcode::Add:
          case Opcode::Sub:
          case Opcode::And:
          case Opcode::Or:
          case Opcode::Xor:
            defined.insert(ins.dst->reg);
            break;
          case Opcode::Load:
          case Opcode::Pop:
          case Opcode::Push:
          case Opcode::Call:
            return false;  // loads, stack traffic, and calls vary per iteration
          case Opcode::TaintSource:
          case Opcode::TaintSink:
            return false;
          default:
            break;
        }
        Label l{fi, i};
        if (config.is_source(l) || config.is_sink(l)) return false;
      }

    // one distinct memory write operand, invariant sources only
    std::optional<std::pair<Register, int64_t>> mem_operand;
    for (uint32_t b : body_local)
      for (uint32_t i = fc.blocks[b].leader; i <= fc.blocks[b].last; i++) {
        const Instruction& ins = p.fn(fi).at(i);
        if (ins.op == Opcode::Store) {
          std::pair<Register, int64_t> op{ins.dst->reg, ins.dst->value};
          if (mem_operand && !(mem_operand->first == op.first &&
                               mem_operand->second == op.second))
            return false;
          mem_operand = op;
          if (defined.count(ins.dst->reg)) return false;  // varying address
          if (ins.src->is_reg() && defined.count(ins.src->reg)) return false;
        } else if (ins.dst && ins.dst->is_mem()) {
          return false;
        } else if (ins.src && ins.src->is_mem()) {
          return false;
        }
        // defined registers must draw only from invariant sources (or
        // themselves), so one iteration fixes every status
        switch (ins.op) {
          case Opcode::Mov:
            if (ins.src->is_reg() && defined.count(ins.src->reg) &&
                !(ins.src->reg == ins.dst->reg))
              return false;
            break;
          case Opcode::Add:
          case Opcode::Sub:
          case Opcode::And:
          case Opcode::Or:
          case Opcode::Xor:
            if (ins.src->is_reg() && defined.count(ins.src->reg) &&
                !(ins.src->reg == ins.dst->reg))
              return false;
            break;
          default:
            break;
        }
      }

    // nothing computed inside may feed a needed value outside the loop
    std::vector<bool> needed(vfg.nodes.size(), false);
    {
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
    }
    for (const auto& e : vfg.edges) {
      if (e.kind != VfgEdgeKind::Value) continue;
      const VfgNode& from = vfg.nodes[e.from];
      const VfgNode& to = vfg.nodes[e.to];
      if (!needed[e.to]) continue;
      bool from_in = body_local.count(fc.block_at(from.site.idx)) > 0;
      bool to_in = body_local.count(fc.block_at(to.site.idx)) > 0;
      if (from_in && !to_in && from.is_def) return false;
    }
    return true;
  }
};

}  // namespace

size_t TracePlan::point_count() const { return registers.size() + blocks.size(); }

TracePlan plan_trace_points(const Program& p, const TaintConfig& config,
                            const PlanOptions& options) {
  Cfg cfg = build_cfg(p);
  PlanBuilder b(p, cfg, config, options);
  b.build();
  return std::move(b.plan);
}

TracePlan conservative_plan(const Program& p, const TaintConfig& config) {
  Cfg cfg = build_cfg(p);
  TaintConfig bound = config;
  bound.bind(p);
  MayTaintInfo may = compute_may_taint(p, cfg, bound);
  TracePlan plan;
  plan.options = PlanOptions{false, false, false};
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    Vfg vfg = build_vfg(p, fi, cfg);
    MvsaResult mv = run_mvsa(p, fi, cfg);
    enrich_vfg(vfg, mv);
    mark_relevant_memory(vfg, p, cfg, bound, may);
    for (uint32_t ni = 0; ni < vfg.nodes.size(); ni++) {
      const VfgNode& n = vfg.nodes[ni];
      if (n.is_mem && vfg.relevant_mem[ni])
        plan.registers.push_back({n.site, n.reg, false});
    }
    auto marks = all_branch_targets(p, fi, cfg);
    plan.blocks.insert(plan.blocks.end(), marks.begin(), marks.end());
  }
  std::sort(plan.registers.begin(), plan.registers.end());
  plan.registers.erase(std::unique(plan.registers.begin(), plan.registers.end()),
                       plan.registers.end());
  repair_plan(p, cfg, bound, plan);
  return plan;
}

TracePlan naive_plan(const Program& p, const TaintConfig& config) {
  Cfg cfg = build_cfg(p);
  TaintConfig bound = config;
  bound.bind(p);
  TracePlan plan;
  plan.options = PlanOptions{false, false, false};
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    auto regs = all_memory_registers(p, fi);
    plan.registers.insert(plan.registers.end(), regs.begin(), regs.end());
    auto marks = all_branch_targets(p, fi, cfg);
    plan.blocks.insert(plan.blocks.end(), marks.begin(), marks.end());
  }
  std::sort(plan.registers.begin(), plan.registers.end());
  plan.registers.erase(std::unique(plan.registers.begin(), plan.registers.end()),
                       plan.registers.end());
  repair_plan(p, cfg, bound, plan);
  return plan;
}

// ---- serialization ----

namespace {

nlohmann::json point_to_json(const Program& p, const RegPoint& rp) {
  return {{"site", p.label_name(rp.site)},
          {"reg", to_string(rp.reg)},
          {"post", rp.post}};
}

RegPoint point_from_json(const nlohmann::json& j, const Program& p) {
  std::string site = j.at("site");
  size_t at = site.find('@');
  if (at == std::string::npos) throw AnalysisError("bad plan site " + site);
  auto fi = p.find_function(site.substr(0, at));
  if (!fi) throw AnalysisError("plan names unknown function in " + site);
  std::string idx = site.substr(at + 1);
  if (!idx.empty() && idx[0] == 'L') idx = idx.substr(1);
  RegPoint rp;
  rp.site = Label{*fi, static_cast<uint32_t>(std::stoul(idx))};
  std::string reg = j.at("reg");
  rp.reg = Register{static_cast<uint8_t>(reg.at(1) - '0')};
  rp.post = j.at("post");
  return rp;
}

}  // namespace

std::string TracePlan::to_json(const Program& p) const {
  nlohmann::json j;
  j["format"] = "tirtaint-plan";
  j["version"] = 1;
  j["options"] = {{"reg_opt", options.reg_opt},
                  {"bl_opt", options.bl_opt},
                  {"loop_opt", options.loop_opt}};
  j["registers"] = nlohmann::json::array();
  for (const auto& rp : registers) j["registers"].push_back(point_to_json(p, rp));
  j["blocks"] = blocks;
  j["skipped_functions"] = skipped_functions;
  j["loops"] = nlohmann::json::array();
  for (const auto& d : loops) {
    nlohmann::json ld;
    ld["header_block"] = d.header_block;
    ld["kind"] = loop_kind_name(d.kind);
    ld["hoist_blocks"] = d.hoist_blocks;
    ld["hoisted_regs"] = nlohmann::json::array();
    for (const auto& rp : d.hoisted_regs) ld["hoisted_regs"].push_back(point_to_json(p, rp));
    j["loops"].push_back(ld);
  }
  return j.dump(2) + "\n";
}

TracePlan TracePlan::from_json(const std::string& text, const Program& p) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "tirtaint-plan")
    throw AnalysisError("not a trace-plan file");
  if (j.value("version", 0) != 1) throw AnalysisError("unsupported plan version");
  TracePlan plan;
  plan.options.reg_opt = j["options"].value("reg_opt", true);
  plan.options.bl_opt = j["options"].value("bl_opt", true);
  plan.options.loop_opt = j["options"].value("loop_opt", true);
  for (const auto& e : j["registers"]) plan.registers.push_back(point_from_json(e, p));
  for (const auto& e : j["blocks"]) plan.blocks.push_back(e.get<uint32_t>());
  for (const auto& e : j["skipped_functions"])
    plan.skipped_functions.push_back(e.get<std::string>());
  for (const auto& e : j["loops"]) {
    LoopDirective d;
    d.header_block = e.at("header_block");
    std::string kind = e.at("kind");
    for (LoopKind k : {LoopKind::NonOnce, LoopKind::BlOnce, LoopKind::RegOnce,
                       LoopKind::FullOnce})
      if (kind == loop_kind_name(k)) d.kind = k;
    d.hoist_blocks = e.at("hoist_blocks");
    for (const auto& h : e["hoisted_regs"]) d.hoisted_regs.push_back(point_from_json(h, p));
    plan.loops.push_back(d);
  }
  return plan;
}

}  // namespace tirtaint
