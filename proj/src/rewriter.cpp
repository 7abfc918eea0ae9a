#include "tirtaint/rewriter.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

namespace tirtaint {

namespace {

// an instruction to splice in, with a symbolic jump target when needed
struct Splice {
  Instruction ins;
  std::optional<TracePointInfo> site;  // record instructions
  // jmp fix: retarget to the header entry of this original index
  std::optional<uint32_t> jmp_to_inner;
};

struct FnRewrite {
  // per original 1-based index
  std::vector<std::vector<Splice>> before_outer;  // preheader groups
  std::vector<std::vector<Splice>> before_inner;  // marks + pre records
  std::vector<std::vector<Splice>> after;         // post records + jmp fixes
};

Instruction make_record(std::optional<Register> reg) {
  Instruction ins;
  ins.op = Opcode::Record;
  if (reg) ins.dst = Operand::make_reg(*reg);
  return ins;
}

Instruction make_jmp(uint32_t target) {
  Instruction ins;
  ins.op = Opcode::Jmp;
  ins.target = target;
  return ins;
}

}  // namespace

RewriteResult rewrite(const Program& p, const TracePlan& plan) {
  Cfg cfg = build_cfg(p);

  // validate the plan against the program
  for (const RegPoint& rp : plan.registers) {
    if (rp.site.fn >= p.functions.size() || rp.site.idx == 0 ||
        rp.site.idx > p.functions[rp.site.fn].size())
      throw RewriteError("plan references unknown site");
  }
  for (uint32_t b : plan.blocks)
    if (b >= cfg.total_blocks())
      throw RewriteError("plan references unknown block " + std::to_string(b));
  for (const LoopDirective& d : plan.loops)
    if (d.header_block >= cfg.total_blocks())
      throw RewriteError("plan references unknown loop header");
  std::set<std::string> skipped(plan.skipped_functions.begin(),
                                plan.skipped_functions.end());
  for (const auto& n : plan.skipped_functions)
    if (!p.find_function(n)) throw RewriteError("plan skips unknown function " + n);

  std::set<std::pair<Label, Register>> hoisted_points;
  for (const LoopDirective& d : plan.loops)
    for (const RegPoint& rp : d.hoisted_regs) hoisted_points.insert({rp.site, rp.reg});

  // blocks whose marks are silenced by block hoisting
  std::set<uint32_t> silenced;
  for (const LoopDirective& d : plan.loops) {
    if (!d.hoist_blocks) continue;
    uint32_t fi = cfg.block(d.header_block).fn;
    uint32_t base = cfg.per_fn[fi].blocks.front().id;
    for (const LoopInfo& li : find_loops(p, fi, cfg))
      if (base + li.header == d.header_block)
        for (uint32_t b : li.body) silenced.insert(base + b);
  }

  // in-place record tables
  std::map<Label, std::vector<TracePointInfo>> pre, post;
  for (const RegPoint& rp : plan.registers) {
    if (hoisted_points.count({rp.site, rp.reg})) continue;
    TracePointInfo info;
    info.kind = TracePointInfo::Kind::RegisterValue;
    info.label = rp.site;
    info.reg = rp.reg;
    info.post = rp.post;
    const FunctionCfg& fc = cfg.per_fn[rp.site.fn];
    info.block = fc.blocks[fc.block_at(rp.site.idx)].id;
    (rp.post ? post : pre)[rp.site].push_back(info);
  }
  for (auto* tbl : {&pre, &post})
    for (auto& [site, v] : *tbl)
      std::sort(v.begin(), v.end(), [](const TracePointInfo& a, const TracePointInfo& b) {
        return std::tie(a.reg.index, a.post) < std::tie(b.reg.index, b.post);
      });

  std::vector<FnRewrite> frs(p.functions.size());
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    uint32_t n = p.functions[fi].size();
    frs[fi].before_outer.assign(n + 1, {});
    frs[fi].before_inner.assign(n + 1, {});
    frs[fi].after.assign(n + 1, {});
  }

  // block marks (skipping consolidated blocks)
  for (uint32_t bid : plan.blocks) {
    const BasicBlock& b = cfg.block(bid);
    if (skipped.count(p.functions[b.fn].name)) continue;
    if (silenced.count(bid)) continue;
    bool consolidated = false;
    for (uint32_t i = b.leader; i <= b.last && !consolidated; i++) {
      Label l{b.fn, i};
      if (pre.count(l) || post.count(l)) consolidated = true;
    }
    if (consolidated) continue;
    TracePointInfo info;
    info.kind = TracePointInfo::Kind::BlockMark;
    info.label = Label{b.fn, b.leader};
    info.block = bid;
    Splice s{make_record(std::nullopt), info, std::nullopt};
    frs[b.fn].before_inner[b.leader].push_back(s);
  }

  // In-place records usually sit right after the host instruction; a
  // pre-value record moves in front of hosts that redefine the register
  // (and calls, whose argument values must be captured on entry).
  auto host_defines = [&](const Instruction& ins, Register r) {
    switch (ins.op) {
      case Opcode::Mov:
      case Opcode::Load:
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::And:
      case Opcode::Or:
      case Opcode::Xor:
        return ins.dst->reg == r;
      case Opcode::Pop:
        return ins.dst->reg == r || r == Register{kStackRegister};
      case Opcode::Push:
        return r == Register{kStackRegister};
      case Opcode::Call:
        return true;
      default:
        return false;
    }
  };
  for (const auto& [site, infos] : pre)
    for (const auto& info : infos) {
      const Instruction& host = p.functions[site.fn].at(site.idx);
      auto& slot = host_defines(host, info.reg) ? frs[site.fn].before_inner[site.idx]
                                                : frs[site.fn].after[site.idx];
      slot.push_back({make_record(info.reg), info, std::nullopt});
    }
  for (const auto& [site, infos] : post)
    for (const auto& info : infos)
      frs[site.fn].after[site.idx].push_back({make_record(info.reg), info, std::nullopt});

  // preheaders for hoisted loops
  std::map<std::pair<uint32_t, uint32_t>, bool> header_of;  // (fn, leader) -> hoisted
  for (const LoopDirective& d : plan.loops) {
    if (d.hoisted_regs.empty() && !d.hoist_blocks) continue;
    const BasicBlock& hb = cfg.block(d.header_block);
    uint32_t fi = hb.fn;
    if (skipped.count(p.functions[fi].name)) continue;
    FnRewrite& fr = frs[fi];
    auto& group = fr.before_outer[hb.leader];
    std::vector<TracePointInfo> recs;
    for (const RegPoint& rp : d.hoisted_regs) {
      TracePointInfo info;
      info.kind = TracePointInfo::Kind::RegisterValue;
      info.label = rp.site;
      info.reg = rp.reg;
      info.post = rp.post;
      info.hoisted = true;
      info.loop_header = d.header_block;
      info.block = d.header_block;
      recs.push_back(info);
    }
    std::sort(recs.begin(), recs.end(), [](const TracePointInfo& a, const TracePointInfo& b) {
      if (a.label != b.label) return a.label < b.label;
      return a.reg < b.reg;
    });
    for (const auto& info : recs) group.push_back({make_record(info.reg), info, std::nullopt});
    if (d.hoist_blocks && recs.empty()) {
      TracePointInfo info;
      info.kind = TracePointInfo::Kind::BlockMark;
      info.label = Label{fi, hb.leader};
      info.preheader_mark = true;
      info.loop_header = d.header_block;
      info.block = d.header_block;
      group.push_back({make_record(std::nullopt), info, std::nullopt});
    }
    header_of[{fi, hb.leader}] = true;

    // back edges that fall through into the header must skip the preheader
    uint32_t base = cfg.per_fn[fi].blocks.front().id;
    for (const LoopInfo& li : find_loops(p, fi, cfg)) {
      if (base + li.header != d.header_block) continue;
      for (uint32_t latch : li.latches) {
        const BasicBlock& lb = cfg.per_fn[fi].blocks[latch];
        const Instruction& term = p.functions[fi].at(lb.last);
        bool falls_into_header = lb.last + 1 == hb.leader && !term.is_terminator();
        bool jcc_falls = lb.last + 1 == hb.leader && term.op == Opcode::Jcc;
        if (falls_into_header || jcc_falls)
          frs[fi].after[lb.last].push_back(
              {make_jmp(hb.leader), std::nullopt, hb.leader});
      }
    }
  }

  // assemble the rewritten program with dense site ids in emission order
  RewriteResult res;
  res.program.entry = p.entry;
  res.program.mem_words = p.mem_words;
  uint32_t next_site = 0;
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    const Function& f = p.functions[fi];
    FnRewrite& fr = frs[fi];
    Function nf;
    nf.name = f.name;

    std::vector<uint32_t> outer_pos(f.size() + 1, 0), inner_pos(f.size() + 1, 0);
    // first pass: compute positions
    uint32_t cursor = 1;
    for (uint32_t i = 1; i <= f.size(); i++) {
      outer_pos[i] = cursor;
      cursor += static_cast<uint32_t>(fr.before_outer[i].size());
      inner_pos[i] = cursor;
      cursor += static_cast<uint32_t>(fr.before_inner[i].size()) + 1;
      cursor += static_cast<uint32_t>(fr.after[i].size());
    }

    // loop membership for back-edge retargeting
    const FunctionCfg& fc = cfg.per_fn[fi];
    auto loops = find_loops(p, fi, cfg);
    auto inside_loop_of_header = [&](uint32_t header_leader, uint32_t instr) {
      for (const LoopInfo& li : loops) {
        if (fc.blocks[li.header].leader != header_leader) continue;
        uint32_t blk = fc.block_at(instr);
        if (std::find(li.body.begin(), li.body.end(), blk) != li.body.end()) return true;
      }
      return false;
    };

    auto adjust_target = [&](uint32_t from_instr, uint32_t target) {
      if (header_of.count({fi, target}) && inside_loop_of_header(target, from_instr))
        return inner_pos[target];
      return outer_pos[target];
    };

    // second pass: emit
    for (uint32_t i = 1; i <= f.size(); i++) {
      auto emit_splice = [&](Splice& s) {
        Instruction ins = s.ins;
        if (s.site) {
          ins.site = next_site++;
          res.map.sites.push_back(*s.site);
        }
        if (s.jmp_to_inner) ins.target = inner_pos[*s.jmp_to_inner];
        nf.instrs.push_back(ins);
      };
      for (auto& s : fr.before_outer[i]) emit_splice(s);
      for (auto& s : fr.before_inner[i]) emit_splice(s);
      Instruction ins = f.at(i);
      if (ins.op == Opcode::Jmp || ins.op == Opcode::Jcc)
        ins.target = adjust_target(i, ins.target);
      nf.instrs.push_back(ins);
      for (auto& s : fr.after[i]) emit_splice(s);
    }
    res.program.functions.push_back(std::move(nf));
  }

  // rewritten block -> original block translation for TIP packets
  Cfg new_cfg = build_cfg(res.program);
  res.map.block_map.assign(new_cfg.total_blocks(), 0);
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    const Function& f = p.functions[fi];
    FnRewrite& fr = frs[fi];
    // rebuild the original index of every new instruction
    std::vector<uint32_t> orig_of;  // per new 1-based index
    orig_of.push_back(0);
    for (uint32_t i = 1; i <= f.size(); i++) {
      for (size_t k = 0; k < fr.before_outer[i].size(); k++) orig_of.push_back(i);
      for (size_t k = 0; k < fr.before_inner[i].size(); k++) orig_of.push_back(i);
      orig_of.push_back(i);
      for (size_t k = 0; k < fr.after[i].size(); k++) orig_of.push_back(i);
    }
    const FunctionCfg& ofc = cfg.per_fn[fi];
    for (const BasicBlock& nb : new_cfg.per_fn[fi].blocks) {
      uint32_t oi = orig_of.at(nb.leader);
      res.map.block_map[nb.id] = ofc.blocks[ofc.block_at(oi)].id;
    }
  }
  return res;
}

// ---- serialization ----

std::string TracePointMap::to_json(const Program& original) const {
  nlohmann::json j;
  j["format"] = "tirtaint-map";
  j["version"] = 1;
  j["sites"] = nlohmann::json::array();
  for (const auto& s : sites) {
    nlohmann::json e;
    e["kind"] = s.kind == TracePointInfo::Kind::RegisterValue ? "reg" : "mark";
    e["site"] = original.label_name(s.label);
    if (s.kind == TracePointInfo::Kind::RegisterValue) {
      e["reg"] = to_string(s.reg);
      e["post"] = s.post;
    }
    if (s.hoisted) e["hoisted"] = true;
    if (s.preheader_mark) e["preheader"] = true;
    if (s.loop_header) e["loop"] = s.loop_header;
    e["block"] = s.block;
    j["sites"].push_back(e);
  }
  j["block_map"] = block_map;
  return j.dump(2) + "\n";
}

TracePointMap TracePointMap::from_json(const std::string& text, const Program& original) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "tirtaint-map")
    throw RewriteError("not a trace-point map file");
  if (j.value("version", 0) != 1) throw RewriteError("unsupported map version");
  TracePointMap m;
  for (const auto& e : j["sites"]) {
    TracePointInfo s;
    s.kind = e.at("kind") == "reg" ? TracePointInfo::Kind::RegisterValue
                                   : TracePointInfo::Kind::BlockMark;
    std::string site = e.at("site");
    size_t at = site.find('@');
    auto fi = original.find_function(site.substr(0, at));
    if (!fi) throw RewriteError("map names unknown function in " + site);
    std::string idx = site.substr(at + 1);
    if (!idx.empty() && idx[0] == 'L') idx = idx.substr(1);
    s.label = Label{*fi, static_cast<uint32_t>(std::stoul(idx))};
    if (s.kind == TracePointInfo::Kind::RegisterValue) {
      std::string reg = e.at("reg");
      s.reg = Register{static_cast<uint8_t>(reg.at(1) - '0')};
      s.post = e.at("post");
    }
    s.hoisted = e.value("hoisted", false);
    s.preheader_mark = e.value("preheader", false);
    s.loop_header = e.value("loop", 0u);
    s.block = e.at("block");
    m.sites.push_back(s);
  }
  for (const auto& e : j["block_map"]) m.block_map.push_back(e.get<uint32_t>());
  return m;
}

}  // namespace tirtaint
