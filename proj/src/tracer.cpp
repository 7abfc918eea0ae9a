#include "tirtaint/tracer.hpp"

#include <array>
#include <charconv>
#include <deque>
#include <fstream>
#include <sstream>

#include "tirtaint/graph_util.hpp"
#include "tirtaint/taintgraph.hpp"

namespace tirtaint {

namespace {

std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) b++;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) e--;
  return s.substr(b, e - b);
}

bool cond_holds(Cond c, const Flags& fl) {
  switch (c) {
    case Cond::Z: return fl.zf;
    case Cond::Nz: return !fl.zf;
    case Cond::Lt: return fl.lt;
    case Cond::Ge: return !fl.lt;
    case Cond::Le: return fl.lt || fl.zf;
    case Cond::Gt: return !fl.lt && !fl.zf;
  }
  return false;
}

constexpr uint32_t kMaxCallDepth = 4096;

// Shared interpreter core. The policy receives per-effect callbacks after
// the architectural state change; addresses are computed once here.
template <class Policy>
struct Core {
  const Program& p;
  const Cfg& cfg;
  MachineState st;
  Policy& pol;
  uint64_t steps = 0;
  uint64_t max_steps;

  Core(const Program& prog, const Cfg& c, const InputImage& input, uint64_t maxs,
       Policy& policy)
      : p(prog), cfg(c), pol(policy), max_steps(maxs) {
    st.mem.assign(input.mem_words_override ? input.mem_words_override : p.mem_words, 0);
    st.regs = input.regs;
    for (const auto& [addr, v] : input.mem) {
      if (addr >= st.mem.size()) throw std::runtime_error("input image address out of range");
      st.mem[addr] = v;
    }
    st.ip = Label{p.entry, 1};
  }

  uint64_t val(const Operand& o) const {
    return o.is_reg() ? st.regs[o.reg.index] : static_cast<uint64_t>(o.value);
  }

  uint64_t mem_addr(const Operand& o, Label site) const {
    uint64_t addr = st.regs[o.reg.index] + static_cast<uint64_t>(o.value);
    if (addr >= st.mem.size())
      throw TrapError("illegal memory access at " + p.label_name(site), site);
    return addr;
  }

  void run() {
    while (!st.halted) {
      const Function& f = p.fn(st.ip.fn);
      if (st.ip.idx > f.size()) {  // fell past the end: behaves like ret
        do_ret(st.ip);
        continue;
      }
      if (steps >= max_steps)
        throw TrapError("step limit exceeded at " + p.label_name(st.ip), st.ip);
      steps++;
      const Label here = st.ip;
      const Instruction& ins = f.at(here.idx);
      const FunctionCfg& fc = cfg.per_fn[here.fn];
      const BasicBlock& blk = fc.blocks[fc.block_at(here.idx)];
      if (blk.leader == here.idx) pol.on_block_enter(blk.id);
      pol.pre_instr(here, ins);
      Label next{here.fn, here.idx + 1};
      switch (ins.op) {
        case Opcode::Mov: {
          st.regs[ins.dst->reg.index] = val(*ins.src);
          pol.on_mov(here, ins.dst->reg, *ins.src);
          break;
        }
        case Opcode::Load: {
          uint64_t addr = mem_addr(*ins.src, here);
          st.regs[ins.dst->reg.index] = st.mem[addr];
          pol.on_load(here, ins.dst->reg, addr);
          break;
        }
        case Opcode::Store: {
          uint64_t addr = mem_addr(*ins.dst, here);
          st.mem[addr] = val(*ins.src);
          pol.on_store(here, addr, *ins.src);
          break;
        }
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor: {
          uint64_t a = st.regs[ins.dst->reg.index];
          uint64_t b = val(*ins.src);
          uint64_t r = 0;
          switch (ins.op) {
            case Opcode::Add: r = a + b; break;
            case Opcode::Sub: r = a - b; break;
            case Opcode::And: r = a & b; break;
            case Opcode::Or: r = a | b; break;
            case Opcode::Xor: r = a ^ b; break;
            default: break;
          }
          st.regs[ins.dst->reg.index] = r;
          bool xor_self = ins.op == Opcode::Xor && ins.src->is_reg() &&
                          ins.src->reg == ins.dst->reg;
          pol.on_arith(here, ins.dst->reg, *ins.src, xor_self);
          break;
        }
        case Opcode::Cmp: {
          uint64_t a = st.regs[ins.dst->reg.index];
          uint64_t b = val(*ins.src);
          st.flags.zf = a == b;
          st.flags.lt = static_cast<int64_t>(a) < static_cast<int64_t>(b);
          pol.on_cmp(here, ins.dst->reg, *ins.src);
          break;
        }
        case Opcode::Jmp:
          next = Label{here.fn, ins.target};
          break;
        case Opcode::Jcc: {
          bool taken = cond_holds(ins.cond, st.flags);
          if (taken) next = Label{here.fn, ins.target};
          pol.on_branch(here, taken);
          break;
        }
        case Opcode::Call: {
          if (st.call_stack.size() >= kMaxCallDepth)
            throw TrapError("call depth exceeded at " + p.label_name(here), here);
          st.call_stack.push_back(next);
          pol.on_call(here, ins.target);
          next = Label{ins.target, 1};
          break;
        }
        case Opcode::Ret:
          st.ip = here;
          do_ret(here);
          continue;
        case Opcode::Push: {
          uint64_t v = val(*ins.src);  // pre-decrement value, like x86 push esp
          uint64_t sp = st.regs[kStackRegister] - 1;
          if (sp >= st.mem.size())
            throw TrapError("stack overflow at " + p.label_name(here), here);
          st.regs[kStackRegister] = sp;
          st.mem[sp] = v;
          pol.on_store(here, sp, *ins.src);
          pol.on_stack_adjust(here);
          break;
        }
        case Opcode::Pop: {
          uint64_t sp = st.regs[kStackRegister];
          if (sp >= st.mem.size())
            throw TrapError("stack underflow at " + p.label_name(here), here);
          uint64_t v = st.mem[sp];
          st.regs[kStackRegister] = sp + 1;  // pop r7 keeps the popped value
          st.regs[ins.dst->reg.index] = v;
          pol.on_load(here, ins.dst->reg, sp);
          pol.on_stack_adjust(here);
          break;
        }
        case Opcode::Record:
          pol.on_record(here, ins);
          break;
        case Opcode::TaintSource:
        case Opcode::TaintSink:
          break;  // annotations execute as no-ops
        case Opcode::Halt:
          st.halted = true;
          pol.on_halt();
          continue;
      }
      pol.post_instr(here, ins);
      st.ip = next;
    }
  }

  void do_ret(Label here) {
    if (st.call_stack.empty()) {
      st.halted = true;
      pol.on_halt();
      return;
    }
    Label back = st.call_stack.back();
    st.call_stack.pop_back();
    pol.on_ret(here, back);
    st.ip = back;
  }
};

// ---- packet emission ----

struct PacketWriter {
  const TraceConfig& cfg;
  std::vector<uint8_t> buf;                 // append-only emission buffer
  std::deque<std::pair<uint32_t, uint32_t>> ring;  // bounded mode: (off, len)
  uint64_t ring_bytes = 0;
  uint64_t loss = 0;
  uint8_t tnt_bits = 0;
  uint8_t tnt_count = 0;
  uint64_t since_psb = 0;
  const std::function<void(const uint8_t*, size_t)>* sink = nullptr;
  size_t seg_start = 0;

  explicit PacketWriter(const TraceConfig& c) : cfg(c) {}

  bool bounded() const { return cfg.buffer_bytes > 0; }

  void begin() {
    if (cfg.mode == TraceMode::None) return;
    psb_raw();
    uint8_t pge[5] = {kPgeByte, 0, 0, 0, 0};
    put_u32(pge + 1, 0);
    packet(pge, sizeof pge, 0);
  }

  void finish() {
    if (cfg.mode == TraceMode::None) return;
    flush_tnt();
    uint8_t pgd = kPgdByte;
    packet(&pgd, 1, 0);
    if (sink && !bounded() && buf.size() > seg_start)
      (*sink)(buf.data() + seg_start, buf.size() - seg_start);
  }

  PacketStream take() {
    if (!bounded()) return std::move(buf);
    PacketStream out;
    for (auto [off, len] : ring)
      out.insert(out.end(), buf.begin() + off, buf.begin() + off + len);
    return out;
  }

  void add_tnt_bit(bool taken) {
    if (tnt_count == 6) flush_tnt();
    if (taken) tnt_bits |= static_cast<uint8_t>(1u << tnt_count);
    tnt_count++;
  }

  void flush_tnt() {
    if (!tnt_count) return;
    uint8_t pkt[2] = {static_cast<uint8_t>(kTntBase | tnt_count), tnt_bits};
    tnt_count = 0;
    tnt_bits = 0;
    packet(pkt, sizeof pkt, 0);
  }

  void fup(uint32_t site) {
    flush_tnt();
    uint8_t pkt[5] = {kFupByte};
    put_u32(pkt + 1, site);
    packet(pkt, sizeof pkt, 0);
  }

  void fup_ptw(uint32_t site, uint64_t value) {
    flush_tnt();
    uint8_t f[5] = {kFupByte};
    put_u32(f + 1, site);
    packet(f, sizeof f, 9);  // keep the pair in one PSB segment
    uint8_t w[9] = {kPtwByte};
    for (int i = 0; i < 8; i++) w[1 + i] = static_cast<uint8_t>(value >> (8 * i));
    packet(w, sizeof w, 0);
  }

  void tip(uint32_t block) {
    flush_tnt();
    uint8_t pkt[5] = {kTipByte};
    put_u32(pkt + 1, block);
    packet(pkt, sizeof pkt, 0);
  }

 private:
  static void put_u32(uint8_t* out, uint32_t v) {
    for (int i = 0; i < 4; i++) out[i] = static_cast<uint8_t>(v >> (8 * i));
  }

  void psb_raw() {
    size_t off = buf.size();
    uint8_t pkt[2] = {kPsbByte0, kPsbByte1};
    append(pkt, 2);
    since_psb = 2;
    if (sink && !bounded()) {
      if (off > seg_start) (*sink)(buf.data() + seg_start, off - seg_start);
      seg_start = off;
    }
  }

  void packet(const uint8_t* bytes, uint32_t len, uint32_t reserve) {
    if (since_psb + len + reserve > cfg.psb_period_bytes) psb_raw();
    append(bytes, len);
    since_psb += len;
  }

  void append(const uint8_t* bytes, uint32_t len) {
    uint32_t off = static_cast<uint32_t>(buf.size());
    buf.insert(buf.end(), bytes, bytes + len);
    if (!bounded()) return;
    while (ring_bytes + len > cfg.buffer_bytes && !ring.empty()) {
      ring_bytes -= ring.front().second;
      ring.pop_front();
      loss++;
    }
    if (len > cfg.buffer_bytes) {
      loss++;  // cannot fit even an empty ring
      return;
    }
    ring.push_back({off, len});
    ring_bytes += len;
  }
};

// ---- executor policy ----

struct ExecPolicy {
  const Program& p;
  const Cfg& cfg;
  PacketWriter w;
  const ExecOptions& opts;
  std::vector<ShadowEntry> shadow;
  MachineState* st = nullptr;

  ExecPolicy(const Program& prog, const Cfg& c, const TraceConfig& tc,
             const ExecOptions& o)
      : p(prog), cfg(c), w(tc), opts(o) {}

  bool tracing() const { return w.cfg.mode != TraceMode::None; }
  bool naive() const { return w.cfg.mode == TraceMode::NaiveFull; }

  void on_block_enter(uint32_t block) {
    if (opts.keep_shadow_log)
      shadow.push_back({ShadowEntry::Kind::BlockEnter, block, 0, 0, false});
  }

  void pre_instr(Label l, const Instruction&) {
    if (opts.known_facts && opts.known_fact_violations) {
      for (int r = 0; r < kNumRegisters; r++) {
        auto it = opts.known_facts->find({l, Register{static_cast<uint8_t>(r)}});
        if (it != opts.known_facts->end() && it->second != st->regs[r])
          opts.known_fact_violations->push_back(
              p.label_name(l) + " r" + std::to_string(r) + " expected " +
              std::to_string(it->second) + " got " + std::to_string(st->regs[r]));
      }
    }
  }
  void post_instr(Label, const Instruction&) {}
  void on_mov(Label, Register, const Operand&) {}
  void on_load(Label, Register, uint64_t) {}
  void on_store(Label, uint64_t, const Operand&) {}
  void on_arith(Label, Register, const Operand&, bool) {}
  void on_cmp(Label, Register, const Operand&) {}
  void on_stack_adjust(Label) {}

  void on_branch(Label, bool taken) {
    if (tracing() && naive()) w.add_tnt_bit(taken);
    if (opts.keep_shadow_log)
      shadow.push_back({ShadowEntry::Kind::BranchBit, 0, 0, 0, taken});
  }

  void on_call(Label, uint32_t) {}

  // Returns are indirect transfers: every tracing mode emits a TIP naming
  // the block that contains the return target.
  void on_ret(Label, Label back) {
    if (!tracing()) return;
    const FunctionCfg& fc = cfg.per_fn[back.fn];
    uint32_t idx = back.idx <= p.fn(back.fn).size() ? back.idx : back.idx - 1;
    w.tip(fc.blocks[fc.block_at(idx)].id);
  }

  void on_record(Label, const Instruction& ins) {
    if (!tracing()) return;
    if (ins.is_register_record()) {
      uint64_t v = st->regs[ins.dst->reg.index];
      w.fup_ptw(ins.site, v);
      if (opts.keep_shadow_log)
        shadow.push_back({ShadowEntry::Kind::RecordValue, 0, ins.site, v, false});
    } else {
      w.fup(ins.site);
      if (opts.keep_shadow_log)
        shadow.push_back({ShadowEntry::Kind::MarkHit, 0, ins.site, 0, false});
    }
  }

  void on_halt() {}
};

}  // namespace

ExecResult execute(const Program& p, const InputImage& input, const TraceConfig& cfg,
                   const ExecOptions& opts) {
  if (cfg.psb_period_bytes < 64) throw std::runtime_error("psbPeriodBytes must be >= 64");
  if (cfg.buffer_bytes > 0 && opts.segment_sink)
    throw std::runtime_error("bounded loss mode is batch-only");
  Cfg g = build_cfg(p);
  ExecPolicy pol(p, g, cfg, opts);
  if (opts.segment_sink) pol.w.sink = &opts.segment_sink;
  Core<ExecPolicy> core(p, g, input, opts.max_steps, pol);
  pol.st = &core.st;
  pol.w.begin();
  ExecResult res;
  try {
    core.run();
  } catch (const TrapError& t) {
    res.trapped = true;
    res.trap_site = t.site();
    res.trap_reason = t.what();
    if (cfg.mode != TraceMode::None) pol.w.fup_ptw(kTrapSite, pack_label(t.site()));
  }
  pol.w.finish();
  res.state = std::move(core.st);
  res.stream = pol.w.take();
  res.loss_count = pol.w.loss;
  res.steps = core.steps;
  res.shadow = std::move(pol.shadow);
  return res;
}

// ---- input images ----

InputImage InputImage::parse(const std::string& text) {
  InputImage img;
  std::istringstream in(text);
  std::string raw;
  int ln = 0;
  while (std::getline(in, raw)) {
    ln++;
    std::string_view line(raw);
    if (size_t hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::istringstream ls{std::string(line)};
    std::string kind;
    ls >> kind;
    auto parse_u64 = [&](const std::string& t) -> uint64_t {
      return std::stoull(t, nullptr, 0);
    };
    try {
      if (kind == "reg") {
        std::string r, v;
        ls >> r >> v;
        if (r.size() != 2 || r[0] != 'r' || r[1] < '0' || r[1] > '7')
          throw std::runtime_error("bad register");
        img.regs[r[1] - '0'] = parse_u64(v);
      } else if (kind == "mem") {
        std::string a, v;
        ls >> a >> v;
        img.mem[parse_u64(a)] = parse_u64(v);
      } else if (kind == "memwords") {
        std::string v;
        ls >> v;
        img.mem_words_override = parse_u64(v);
      } else {
        throw std::runtime_error("unknown directive '" + kind + "'");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("input image line " + std::to_string(ln) + ": " + e.what());
    }
  }
  return img;
}

InputImage InputImage::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string InputImage::print() const {
  std::string out;
  for (int i = 0; i < kNumRegisters; i++)
    if (regs[i]) out += "reg r" + std::to_string(i) + " " + std::to_string(regs[i]) + "\n";
  for (const auto& [a, v] : mem)
    out += "mem " + std::to_string(a) + " " + std::to_string(v) + "\n";
  if (mem_words_override)
    out += "memwords " + std::to_string(mem_words_override) + "\n";
  return out;
}

// ---- reference DTA ----

namespace {

struct OraclePolicy {
  const Program& p;
  const Cfg& cfg;
  const TaintConfig& tc;
  MachineState* st = nullptr;

  std::array<bool, kNumRegisters> reg_taint{};
  std::vector<bool> mem_taint;
  bool flag_taint = false;
  uint32_t suspend_depth_at = 0;  // call-stack depth below which tracking resumes
  bool suspended = false;

  struct Region {
    uint32_t join_block;  // kNoNode: until frame exit
    size_t frame;
  };
  std::vector<Region> regions;
  std::vector<PostDomTree> pdoms;  // per function, lazy

  TaintReport report;
  std::map<Label, uint32_t> sink_occurrences;

  OraclePolicy(const Program& prog, const Cfg& c, const TaintConfig& config)
      : p(prog), cfg(c), tc(config) {
    pdoms.resize(p.functions.size());
  }

  bool region_taint() const { return !regions.empty(); }

  void set_reg(Register r, bool t) {
    if (suspended) return;
    reg_taint[r.index] = t || region_taint();
  }
  // Weak memory update: stores taint a word only with a tainted value;
  // immediate stores clear it (the sanitizing idiom).
  void set_mem(uint64_t addr, bool t, bool imm_store) {
    if (suspended) return;
    bool v = t || region_taint();
    if (v)
      mem_taint[addr] = true;
    else if (imm_store)
      mem_taint[addr] = false;
  }

  const PostDomTree& pdom(uint32_t fn) {
    if (pdoms[fn].ipdom.empty() && !cfg.per_fn[fn].blocks.empty()) {
      const auto& blocks = cfg.per_fn[fn].blocks;
      uint32_t base = blocks.front().id;
      std::vector<std::vector<uint32_t>> succs(blocks.size());
      std::vector<uint32_t> exits;
      for (uint32_t i = 0; i < blocks.size(); i++) {
        for (uint32_t s : blocks[i].succs) succs[i].push_back(s - base);
        const Instruction& term = p.fn(fn).at(blocks[i].last);
        bool falls_off = blocks[i].last == p.fn(fn).size() && !term.is_terminator();
        if (blocks[i].succs.empty() || falls_off || term.op == Opcode::Ret ||
            term.op == Opcode::Halt)
          exits.push_back(i);
      }
      pdoms[fn] = compute_postdominators(static_cast<uint32_t>(blocks.size()), exits, succs);
    }
    return pdoms[fn];
  }

  void on_block_enter(uint32_t block) {
    size_t depth = st->call_stack.size();
    std::erase_if(regions, [&](const Region& r) {
      return r.frame == depth && r.join_block == block;
    });
  }

  bool defines_reg(const Instruction& ins, Register r) const {
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
      default:
        return false;
    }
  }

  std::optional<uint64_t> operand_addr(Label l, const Instruction& ins) const {
    const Operand* m = nullptr;
    if (ins.dst && ins.dst->is_mem()) m = &*ins.dst;
    if (ins.src && ins.src->is_mem()) m = &*ins.src;
    if (ins.op == Opcode::Push) {
      uint64_t a = st->regs[kStackRegister] - 1;
      return a < st->mem.size() ? std::optional(a) : std::nullopt;
    }
    if (ins.op == Opcode::Pop) {
      uint64_t a = st->regs[kStackRegister];
      return a < st->mem.size() ? std::optional(a) : std::nullopt;
    }
    if (!m) return std::nullopt;
    uint64_t a = st->regs[m->reg.index] + static_cast<uint64_t>(m->value);
    (void)l;
    return a < st->mem.size() ? std::optional(a) : std::nullopt;
  }

  void apply_source(Label l, const Instruction& ins) {
    for (const auto& s : tc.sources) {
      if (s.site != l) continue;
      if (!s.is_mem) {
        if (!suspended) reg_taint[s.reg.index] = true;
      } else if (auto a = operand_addr(l, ins)) {
        if (!suspended) mem_taint[*a] = true;
      }
    }
  }

  void observe_sinks_pre(Label l, const Instruction& ins) {
    for (const auto& s : tc.sinks) {
      if (s.site != l) continue;
      bool defined = !s.is_mem && defines_reg(ins, s.reg);
      bool mem_defined = s.is_mem && (ins.op == Opcode::Store || ins.op == Opcode::Push);
      if (defined || mem_defined) continue;  // observed post
      observe(l, s, ins);
    }
  }

  void observe_sinks_post(Label l, const Instruction& ins) {
    for (const auto& s : tc.sinks) {
      if (s.site != l) continue;
      bool defined = !s.is_mem && defines_reg(ins, s.reg);
      bool mem_defined = s.is_mem && (ins.op == Opcode::Store || ins.op == Opcode::Push);
      if (defined || mem_defined) observe(l, s, ins);
    }
  }

  void observe(Label l, const TaintPoint& s, const Instruction& ins) {
    bool status = false;
    if (!s.is_mem) {
      status = reg_taint[s.reg.index];
    } else if (auto a = operand_addr(l, ins)) {
      status = mem_taint[*a];
    }
    SinkObservation ob;
    ob.site = l;
    ob.occurrence = ++sink_occurrences[l];
    ob.tainted = status;
    report.sinks.push_back(ob);
    if (status) report.tainted_sink_count++;
  }

  void pre_instr(Label l, const Instruction& ins) {
    apply_source(l, ins);
    observe_sinks_pre(l, ins);
  }

  void post_instr(Label l, const Instruction& ins) {
    // re-taint defined source slots so a defining source site stays tainted
    for (const auto& s : tc.sources) {
      if (s.site != l) continue;
      if (!s.is_mem && defines_reg(ins, s.reg)) {
        if (!suspended) reg_taint[s.reg.index] = true;
      } else if (s.is_mem && (ins.op == Opcode::Store || ins.op == Opcode::Push)) {
        if (auto a = operand_addr(l, ins))
          if (!suspended) mem_taint[*a] = true;
      }
    }
    observe_sinks_post(l, ins);
  }

  void on_mov(Label, Register rd, const Operand& src) {
    set_reg(rd, src.is_reg() ? reg_taint[src.reg.index] : false);
  }
  void on_load(Label, Register rd, uint64_t addr) { set_reg(rd, mem_taint[addr]); }
  void on_store(Label, uint64_t addr, const Operand& src) {
    set_mem(addr, src.is_reg() ? reg_taint[src.reg.index] : false, src.is_imm());
  }
  void on_arith(Label, Register rd, const Operand& src, bool xor_self) {
    bool t = xor_self ? false
                      : (reg_taint[rd.index] || (src.is_reg() && reg_taint[src.reg.index]));
    set_reg(rd, t);
  }
  void on_cmp(Label, Register a, const Operand& b) {
    flag_taint = reg_taint[a.index] || (b.is_reg() && reg_taint[b.reg.index]);
  }
  void on_stack_adjust(Label) {
    // r7 itself changed by a constant stride: taint unchanged (or-with-clean)
    if (!suspended && region_taint()) reg_taint[kStackRegister] = true;
  }

  void on_branch(Label l, bool) {
    if (!tc.implicit_control_taint || !flag_taint || suspended) return;
    const FunctionCfg& fc = cfg.per_fn[l.fn];
    uint32_t local = fc.block_at(l.idx);
    const PostDomTree& t = pdom(l.fn);
    uint32_t join = t.ipdom[local];
    uint32_t base = fc.blocks.front().id;
    regions.push_back({join == kNoNode ? kNoNode : base + join, st->call_stack.size()});
  }

  void on_call(Label, uint32_t callee) {
    if (suspended) return;
    auto it = tc.summaries.find(p.fn(callee).name);
    if (it == tc.summaries.end()) return;
    apply_summary_rule(it->second);
    suspended = true;
    suspend_depth_at = static_cast<uint32_t>(st->call_stack.size());
  }

  void apply_summary_rule(const Summary& s) {
    if (!s.dst.is_mem) {
      bool src_t = s.src && !s.src->is_mem ? reg_taint[s.src->reg.index] : false;
      switch (s.kind) {
        case SummaryKind::Copy: reg_taint[s.dst.reg.index] = src_t; break;
        case SummaryKind::Or: reg_taint[s.dst.reg.index] |= src_t; break;
        case SummaryKind::Sanitize: reg_taint[s.dst.reg.index] = false; break;
      }
      return;
    }
    uint64_t dst = st->regs[0], src = st->regs[1], len = st->regs[2];
    for (uint64_t i = 0; i < len; i++) {
      uint64_t d = dst + i;
      if (d >= st->mem.size()) break;
      switch (s.kind) {
        case SummaryKind::Copy:
        case SummaryKind::Or: {
          uint64_t sa = src + i;
          bool t = sa < st->mem.size() && mem_taint[sa];
          if (t) mem_taint[d] = true;
          break;
        }
        case SummaryKind::Sanitize:
          mem_taint[d] = false;
          break;
      }
    }
  }

  void on_ret(Label, Label) {
    size_t depth = st->call_stack.size();
    if (suspended && depth < suspend_depth_at) suspended = false;
    std::erase_if(regions, [&](const Region& r) { return r.frame > depth; });
  }

  void on_record(Label, const Instruction&) {}
  void on_halt() { regions.clear(); }
};

}  // namespace

TaintReport reference_dta(const Program& p, const InputImage& input,
                          const TaintConfig& config, uint64_t max_steps) {
  TaintConfig bound = config;
  bound.bind(p);
  Cfg g = build_cfg(p);
  OraclePolicy pol(p, g, bound);
  Core<OraclePolicy> core(p, g, input, max_steps, pol);
  pol.st = &core.st;
  pol.mem_taint.assign(core.st.mem.size(), false);
  for (uint64_t a : bound.pretainted_mem) {
    if (a >= core.st.mem.size())
      throw ConfigError("pre-tainted address out of memory range");
    pol.mem_taint[a] = true;
  }
  try {
    core.run();
  } catch (const TrapError& t) {
    pol.report.trapped = true;
    pol.report.trap_site = t.site();
    pol.report.trap_reason = t.what();
  }
  return std::move(pol.report);
}

// ---- report serialization ----

std::string TaintReport::verdicts(const Program& p) const {
  std::string out;
  for (const auto& s : sinks) {
    out += "sink " + p.label_name(s.site) + " #" + std::to_string(s.occurrence) +
           (s.tainted ? " TAINTED" : " clean") + "\n";
  }
  if (trapped) out += "trap " + p.label_name(trap_site) + "\n";
  return out;
}

std::string TaintReport::canonical(const Program& p) const {
  std::string out;
  for (const auto& s : sinks) {
    out += "sink " + p.label_name(s.site) + " #" + std::to_string(s.occurrence) +
           (s.tainted ? " TAINTED" : " clean");
    if (!s.witness.empty()) out += " via " + s.witness;
    out += "\n";
  }
  if (trapped) out += "trap " + p.label_name(trap_site) + "\n";
  return out;
}

}  // namespace tirtaint
