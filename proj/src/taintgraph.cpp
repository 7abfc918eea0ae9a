#include "tirtaint/taintgraph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "reaching_defs.hpp"

namespace tirtaint {

namespace {

std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) b++;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) e--;
  return s.substr(b, e - b);
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

}  // namespace

bool TaintConfig::is_source(Label l) const {
  for (const auto& s : sources)
    if (s.site == l) return true;
  return false;
}

bool TaintConfig::is_sink(Label l) const {
  for (const auto& s : sinks)
    if (s.site == l) return true;
  return false;
}

namespace {

using RawPoint = TaintConfig::RawPointHandle;

// "<fn>@L<idx>" or "<fn>@<idx>"; function resolved at bind time.
RawPoint parse_point(const std::string& site, const std::string& slot, int ln) {
  size_t at = site.find('@');
  if (at == std::string::npos)
    throw ConfigError("line " + std::to_string(ln) + ": bad site '" + site + "'");
  std::string fn = site.substr(0, at);
  std::string idx = site.substr(at + 1);
  if (!idx.empty() && idx[0] == 'L') idx = idx.substr(1);
  uint32_t i;
  try {
    i = static_cast<uint32_t>(std::stoul(idx));
  } catch (...) {
    throw ConfigError("line " + std::to_string(ln) + ": bad site index '" + site + "'");
  }
  RawPoint pt{fn, i, false, {}};
  if (slot == "mem") {
    pt.is_mem = true;
  } else if (slot.size() == 2 && slot[0] == 'r' && slot[1] >= '0' && slot[1] <= '7') {
    pt.reg = Register{static_cast<uint8_t>(slot[1] - '0')};
  } else {
    throw ConfigError("line " + std::to_string(ln) + ": bad slot '" + slot + "'");
  }
  return pt;
}

SummarySlot parse_slot(const std::string& t, int ln) {
  if (t == "mem") return SummarySlot{true, {}};
  if (t.size() == 2 && t[0] == 'r' && t[1] >= '0' && t[1] <= '7')
    return SummarySlot{false, Register{static_cast<uint8_t>(t[1] - '0')}};
  throw ConfigError("line " + std::to_string(ln) + ": bad summary slot '" + t + "'");
}

}  // namespace

TaintConfig TaintConfig::parse(const std::string& text) {
  TaintConfig cfg;
  std::istringstream in(text);
  std::string rawline;
  int ln = 0;
  std::vector<RawPoint> raw_sources, raw_sinks;
  while (std::getline(in, rawline)) {
    ln++;
    std::string_view line(rawline);
    if (size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto parts = split_ws(line);
    const std::string& kind = parts[0];
    if (kind == "source" || kind == "sink") {
      if (parts.size() != 3)
        throw ConfigError("line " + std::to_string(ln) + ": expected '" + kind +
                          " <fn>@L<idx> <reg|mem>'");
      RawPoint pt = parse_point(parts[1], parts[2], ln);
      (kind == "source" ? raw_sources : raw_sinks).push_back(pt);
    } else if (kind == "taintmem") {
      if (parts.size() != 2)
        throw ConfigError("line " + std::to_string(ln) + ": expected 'taintmem <addr>'");
      cfg.pretainted_mem.push_back(std::stoull(parts[1], nullptr, 0));
    } else if (kind == "summary") {
      if (parts.size() < 4)
        throw ConfigError("line " + std::to_string(ln) +
                          ": expected 'summary <name> <rule> <dst> [<src>]'");
      Summary s;
      const std::string& rule = parts[2];
      if (rule == "copy")
        s.kind = SummaryKind::Copy;
      else if (rule == "or")
        s.kind = SummaryKind::Or;
      else if (rule == "sanitize")
        s.kind = SummaryKind::Sanitize;
      else
        throw ConfigError("line " + std::to_string(ln) + ": unknown rule '" + rule + "'");
      s.dst = parse_slot(parts[3], ln);
      if (s.kind == SummaryKind::Sanitize) {
        if (parts.size() != 4)
          throw ConfigError("line " + std::to_string(ln) +
                            ": sanitize takes one slot (arity mismatch)");
      } else {
        if (parts.size() != 5)
          throw ConfigError("line " + std::to_string(ln) + ": " + rule +
                            " takes two slots (arity mismatch)");
        SummarySlot src = parse_slot(parts[4], ln);
        if (s.dst.is_mem != src.is_mem)
          throw ConfigError("line " + std::to_string(ln) +
                            ": summary slots must both be registers or both mem");
        s.src = src;
      }
      cfg.summaries[parts[1]] = s;
    } else if (kind == "implicit") {
      if (parts.size() != 2 || (parts[1] != "on" && parts[1] != "off"))
        throw ConfigError("line " + std::to_string(ln) + ": expected 'implicit on|off'");
      cfg.implicit_control_taint = parts[1] == "on";
    } else {
      throw ConfigError("line " + std::to_string(ln) + ": unknown directive '" + kind + "'");
    }
  }
  cfg.raw_sources_ = std::move(raw_sources);
  cfg.raw_sinks_ = std::move(raw_sinks);
  return cfg;
}

TaintConfig TaintConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void TaintConfig::bind(const Program& p) {
  auto resolve = [&](const RawPointHandle& h, std::vector<TaintPoint>& out) {
    auto fi = p.find_function(h.fn);
    if (!fi) throw ConfigError("config site names unknown function '" + h.fn + "'");
    if (h.idx == 0 || h.idx > p.functions[*fi].size())
      throw ConfigError("config site " + h.fn + "@L" + std::to_string(h.idx) +
                        " out of range");
    TaintPoint pt;
    pt.site = Label{*fi, h.idx};
    pt.is_mem = h.is_mem;
    pt.reg = h.reg;
    if (pt.is_mem) {
      const Instruction& ins = p.at(pt.site);
      bool has_mem = (ins.dst && ins.dst->is_mem()) || (ins.src && ins.src->is_mem()) ||
                     ins.op == Opcode::Push || ins.op == Opcode::Pop;
      if (!has_mem)
        throw ConfigError("config site " + p.label_name(pt.site) +
                          " has no memory operand");
    }
    if (std::find(out.begin(), out.end(), pt) == out.end()) out.push_back(pt);
  };
  for (const auto& h : raw_sources_) resolve(h, sources);
  for (const auto& h : raw_sinks_) resolve(h, sinks);
  raw_sources_.clear();
  raw_sinks_.clear();

  // taint_source / taint_sink pseudo-ops contribute config entries
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    const Function& f = p.functions[fi];
    for (uint32_t i = 1; i <= f.size(); i++) {
      const Instruction& ins = f.at(i);
      if (ins.op != Opcode::TaintSource && ins.op != Opcode::TaintSink) continue;
      TaintPoint pt;
      pt.site = Label{fi, i};
      if (ins.dst->is_mem()) {
        pt.is_mem = true;
      } else {
        pt.reg = ins.dst->reg;
      }
      auto& vec = ins.op == Opcode::TaintSource ? sources : sinks;
      if (std::find(vec.begin(), vec.end(), pt) == vec.end()) vec.push_back(pt);
    }
  }
  std::sort(sources.begin(), sources.end());
  std::sort(sinks.begin(), sinks.end());
}

std::string TaintConfig::print(const Program& p) const {
  std::string out;
  auto slot_name = [](const TaintPoint& pt) {
    return pt.is_mem ? std::string("mem") : to_string(pt.reg);
  };
  for (const auto& s : sources)
    out += "source " + p.label_name(s.site) + " " + slot_name(s) + "\n";
  for (const auto& s : sinks)
    out += "sink " + p.label_name(s.site) + " " + slot_name(s) + "\n";
  for (uint64_t a : pretainted_mem) out += "taintmem " + std::to_string(a) + "\n";
  for (const auto& [name, s] : summaries) {
    out += "summary " + name + " ";
    out += s.kind == SummaryKind::Copy ? "copy" : s.kind == SummaryKind::Or ? "or" : "sanitize";
    out += s.dst.is_mem ? " mem" : " " + to_string(s.dst.reg);
    if (s.src) out += s.src->is_mem ? " mem" : " " + to_string(s.src->reg);
    out += "\n";
  }
  if (implicit_control_taint) out += "implicit on\n";
  return out;
}

// ---- taint graph construction ----

const char* edge_label_name(EdgeLabel l) {
  switch (l) {
    case EdgeLabel::Assign: return "a";
    case EdgeLabel::Deref: return "d";
    case EdgeLabel::Or: return "o";
    case EdgeLabel::Sanitize: return "s";
    case EdgeLabel::Block: return "bl";
  }
  return "?";
}

uint32_t TaintGraph::node_index(const TaintNode& n) const {
  for (uint32_t i = 0; i < nodes.size(); i++)
    if (nodes[i] == n) return i;
  return UINT32_MAX;
}

namespace {

struct GraphBuilder {
  const Program& p;
  uint32_t fn;
  const Cfg& cfg;
  const TaintConfig& config;
  TaintGraph g;
  std::map<TaintNode, uint32_t> index;

  uint32_t node(Label site, bool is_mem, Register reg, bool is_def) {
    TaintNode n;
    n.site = site;
    n.is_mem = is_mem;
    n.reg = reg;
    n.is_def = is_def;
    auto it = index.find(n);
    if (it != index.end()) return it->second;
    for (const auto& s : config.sources)
      if (s.site == site && s.is_mem == is_mem && (is_mem || s.reg == reg))
        n.source_mark = true;
    for (const auto& s : config.sinks)
      if (s.site == site && s.is_mem == is_mem && (is_mem || s.reg == reg))
        n.sink_mark = true;
    uint32_t id = static_cast<uint32_t>(g.nodes.size());
    g.nodes.push_back(n);
    index[n] = id;
    return id;
  }

  void edge(uint32_t from, uint32_t to, EdgeLabel label, uint32_t guard = 0) {
    g.edges.push_back({from, to, label, guard});
  }

  void build() {
    g.fn = fn;
    const Function& f = p.fn(fn);
    const FunctionCfg& fc = cfg.per_fn[fn];
    ClobberMap clobbers = compute_clobbers(p);
    ReachingDefs rd(f, fc, clobbers);

    // Per-instruction transfer edges.
    for (uint32_t i = 1; i <= f.size(); i++) {
      Label l{fn, i};
      const Instruction& ins = f.at(i);
      switch (ins.op) {
        case Opcode::Mov:
          if (ins.src->is_reg())
            edge(node(l, false, ins.src->reg, false), node(l, false, ins.dst->reg, true),
                 EdgeLabel::Assign);
          else
            edge(node(l, false, ins.dst->reg, false), node(l, false, ins.dst->reg, true),
                 EdgeLabel::Sanitize);
          break;
        case Opcode::Load: {
          uint32_t base = node(l, false, ins.src->reg, false);
          uint32_t mem = node(l, true, ins.src->reg, false);
          edge(base, mem, EdgeLabel::Deref);
          edge(mem, node(l, false, ins.dst->reg, true), EdgeLabel::Assign);
          break;
        }
        case Opcode::Store: {
          uint32_t base = node(l, false, ins.dst->reg, false);
          uint32_t mem = node(l, true, ins.dst->reg, true);
          edge(base, mem, EdgeLabel::Deref);
          if (ins.src->is_reg())
            edge(node(l, false, ins.src->reg, false), mem, EdgeLabel::Assign);
          else
            edge(node(l, true, ins.dst->reg, false), mem, EdgeLabel::Sanitize);
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
            edge(node(l, false, ins.dst->reg, false), def, EdgeLabel::Sanitize);
          } else {
            edge(node(l, false, ins.dst->reg, false), def, EdgeLabel::Or);
            if (ins.src->is_reg())
              edge(node(l, false, ins.src->reg, false), def, EdgeLabel::Or);
          }
          break;
        }
        case Opcode::Push: {
          Register sp{kStackRegister};
          uint32_t mem = node(l, true, sp, true);
          edge(node(l, false, sp, false), mem, EdgeLabel::Deref);
          if (ins.src->is_reg())
            edge(node(l, false, ins.src->reg, false), mem, EdgeLabel::Assign);
          else
            edge(node(l, true, sp, false), mem, EdgeLabel::Sanitize);
          edge(node(l, false, sp, false), node(l, false, sp, true), EdgeLabel::Or);
          break;
        }
        case Opcode::Pop: {
          Register sp{kStackRegister};
          uint32_t mem = node(l, true, sp, false);
          edge(node(l, false, sp, false), mem, EdgeLabel::Deref);
          edge(mem, node(l, false, ins.dst->reg, true), EdgeLabel::Assign);
          edge(node(l, false, sp, false), node(l, false, sp, true), EdgeLabel::Or);
          break;
        }
        case Opcode::Call: {
          // callee entry guards taint flow into live-in registers
          uint32_t callee = ins.target;
          const Function& cf = p.fn(callee);
          const FunctionCfg& cc = cfg.per_fn[callee];
          if (cc.blocks.empty()) break;
          uint32_t entry_block = cc.blocks.front().id;
          ReachingDefs crd(cf, cc, clobbers);
          for (int r = 0; r < kNumRegisters; r++) {
            Register reg{static_cast<uint8_t>(r)};
            // first use reached by the entry value
            for (uint32_t j = 1; j <= cf.size(); j++) {
              RegEffects eff = reg_effects(cf.at(j), clobbers);
              bool uses = std::find(eff.uses.begin(), eff.uses.end(), reg) != eff.uses.end();
              if (!uses) continue;
              const auto& defs = crd.at(j, reg);
              if (std::find(defs.begin(), defs.end(), kEntryDef) != defs.end()) {
                edge(node(l, false, reg, false), node(Label{callee, j}, false, reg, false),
                     EdgeLabel::Block, entry_block);
                break;
              }
            }
          }
          break;
        }
        default:
          break;
      }
    }

    // Cross-instruction def-use flow: a within a block in program order,
    // bl(use's block) when the flow crosses blocks or loops around.
    const Function& f2 = p.fn(fn);
    for (uint32_t i = 1; i <= f2.size(); i++) {
      Label ul{fn, i};
      RegEffects eff = reg_effects(f2.at(i), clobbers);
      for (Register r : eff.uses) {
        for (uint32_t d : rd.at(i, r)) {
          if (d == kEntryDef) continue;
          Label dl{fn, d};
          bool same_block = fc.block_at(d) == fc.block_at(i) && d < i;
          uint32_t use_node = node(ul, false, r, false);
          uint32_t def_node = node(dl, false, r, true);
          if (same_block)
            edge(def_node, use_node, EdgeLabel::Assign);
          else
            edge(def_node, use_node, EdgeLabel::Block,
                 fc.blocks[fc.block_at(i)].id);
        }
      }
    }
  }
};

}  // namespace

TaintGraph build_taint_graph(const Program& p, uint32_t fn, const Cfg& cfg,
                             const TaintConfig& config) {
  GraphBuilder b{p, fn, cfg, config, {}, {}};
  b.build();
  return std::move(b.g);
}

std::vector<TaintGraph> build_taint_graphs(const Program& p, const Cfg& cfg,
                                           const TaintConfig& config) {
  std::vector<TaintGraph> out;
  out.reserve(p.functions.size());
  for (uint32_t fi = 0; fi < p.functions.size(); fi++)
    out.push_back(build_taint_graph(p, fi, cfg, config));
  return out;
}

std::string TaintGraph::dump(const Program& p) const {
  auto node_name = [&](const TaintNode& n) {
    std::string s = n.is_mem ? "[" + to_string(n.reg) + "]" : to_string(n.reg);
    s += "@" + p.label_name(n.site).substr(p.functions[n.site.fn].name.size() + 1);
    s += n.is_def ? ":def" : ":use";
    if (n.source_mark) s += ":source";
    if (n.sink_mark) s += ":sink";
    return s;
  };
  std::vector<std::string> lines;
  for (const auto& e : edges) {
    std::string lbl = edge_label_name(e.label);
    if (e.label == EdgeLabel::Block) lbl += "(" + std::to_string(e.guard_block) + ")";
    lines.push_back(node_name(nodes[e.from]) + " -" + lbl + "-> " + node_name(nodes[e.to]));
  }
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace tirtaint
