#include "tirtaint/isa.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace tirtaint {

namespace {

struct OpInfo {
  const char* name;
  Opcode op;
};

constexpr OpInfo kOps[] = {
    {"mov", Opcode::Mov},     {"load", Opcode::Load},   {"store", Opcode::Store},
    {"add", Opcode::Add},     {"sub", Opcode::Sub},     {"and", Opcode::And},
    {"or", Opcode::Or},       {"xor", Opcode::Xor},     {"cmp", Opcode::Cmp},
    {"jmp", Opcode::Jmp},     {"call", Opcode::Call},   {"ret", Opcode::Ret},
    {"push", Opcode::Push},   {"pop", Opcode::Pop},     {"record", Opcode::Record},
    {"taint_source", Opcode::TaintSource},              {"taint_sink", Opcode::TaintSink},
    {"halt", Opcode::Halt},
};

constexpr struct {
  const char* name;
  Cond cond;
} kConds[] = {
    {"jz", Cond::Z},   {"jnz", Cond::Nz}, {"jlt", Cond::Lt},
    {"jge", Cond::Ge}, {"jle", Cond::Le}, {"jgt", Cond::Gt},
};

std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) b++;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) e--;
  return s.substr(b, e - b);
}

bool is_ident(std::string_view s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

class Parser {
 public:
  Parser(std::string_view text, const ParseOptions& opts) : text_(text), opts_(opts) {}

  Program run() {
    int lineno = 0;
    size_t pos = 0;
    while (pos <= text_.size()) {
      size_t nl = text_.find('\n', pos);
      std::string_view raw = text_.substr(pos, nl == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : nl - pos);
      pos = nl == std::string_view::npos ? text_.size() + 1 : nl + 1;
      lineno++;
      if (size_t hash = raw.find('#'); hash != std::string_view::npos)
        raw = raw.substr(0, hash);
      std::string_view line = trim(raw);
      if (line.empty()) continue;
      parse_line(line, lineno);
    }
    finish_function();
    if (prog_.functions.empty()) throw ParseError("empty program", lineno);
    resolve_jumps();
    return std::move(prog_);
  }

 private:
  void parse_line(std::string_view line, int ln) {
    // "name:" opens a function; an instruction may follow on the same line.
    if (size_t colon = line.find(':'); colon != std::string_view::npos) {
      std::string_view head = trim(line.substr(0, colon));
      std::string_view rest = trim(line.substr(colon + 1));
      if (!is_ident(head)) throw ParseError("bad function name '" + std::string(head) + "'", ln);
      start_function(std::string(head), ln);
      if (!rest.empty()) parse_instruction(rest, ln);
      return;
    }
    parse_instruction(line, ln);
  }

  void start_function(std::string name, int ln) {
    finish_function();
    for (const auto& f : prog_.functions)
      if (f.name == name) throw ParseError("duplicate function name '" + name + "'", ln);
    cur_ = Function{std::move(name), {}};
    cur_line_ = ln;
  }

  void finish_function() {
    if (!cur_) return;
    if (cur_->instrs.empty())
      throw ParseError("function '" + cur_->name + "' has no instructions", cur_line_);
    prog_.functions.push_back(std::move(*cur_));
    cur_.reset();
  }

  std::vector<std::string_view> split_operands(std::string_view s) {
    std::vector<std::string_view> out;
    size_t start = 0;
    while (start <= s.size()) {
      size_t comma = s.find(',', start);
      std::string_view part =
          trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                               : comma - start));
      if (!part.empty()) out.push_back(part);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }

  Register parse_register(std::string_view t, int ln) {
    if (t.size() == 2 && t[0] == 'r' && t[1] >= '0' && t[1] <= '7')
      return Register{static_cast<uint8_t>(t[1] - '0')};
    throw ParseError("unknown register '" + std::string(t) + "'", ln);
  }

  int64_t parse_int(std::string_view t, int ln) {
    bool neg = false;
    if (!t.empty() && (t[0] == '-' || t[0] == '+')) {
      neg = t[0] == '-';
      t.remove_prefix(1);
    }
    int base = 10;
    if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
      base = 16;
      t.remove_prefix(2);
    }
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v, base);
    if (ec != std::errc() || p != t.data() + t.size())
      throw ParseError("bad integer '" + std::string(t) + "'", ln);
    return neg ? -static_cast<int64_t>(v) : static_cast<int64_t>(v);
  }

  Operand parse_operand(std::string_view t, int ln) {
    if (!t.empty() && t.front() == '[') {
      if (t.back() != ']') throw ParseError("unterminated memory operand", ln);
      std::string_view inner = trim(t.substr(1, t.size() - 2));
      // forms: [rB], [rB+disp], [rB-disp]
      size_t sign = inner.find_first_of("+-", 1);
      Register base;
      int64_t disp = 0;
      if (sign == std::string_view::npos) {
        base = parse_register(trim(inner), ln);
      } else {
        base = parse_register(trim(inner.substr(0, sign)), ln);
        disp = parse_int(trim(inner.substr(sign)), ln);
      }
      if (disp < INT32_MIN || disp > INT32_MAX)
        throw ParseError("displacement out of range", ln);
      return Operand::make_mem(base, static_cast<int32_t>(disp));
    }
    if (!t.empty() && (t[0] == 'r') && t.size() == 2)
      return Operand::make_reg(parse_register(t, ln));
    if (!t.empty() && (std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '-' || t[0] == '+'))
      return Operand::make_imm(parse_int(t, ln));
    throw ParseError("bad operand '" + std::string(t) + "'", ln);
  }

  // Local targets are written L<n> where n is the 1-based instruction index.
  uint32_t parse_target(std::string_view t, int ln) {
    if (t.size() >= 2 && t[0] == 'L') {
      uint32_t v = 0;
      auto body = t.substr(1);
      auto [p, ec] = std::from_chars(body.data(), body.data() + body.size(), v);
      if (ec == std::errc() && p == body.data() + body.size() && v > 0) return v;
    }
    throw ParseError("unresolved label '" + std::string(t) + "'", ln);
  }

  void parse_instruction(std::string_view line, int ln) {
    if (!cur_) throw ParseError("instruction before any function header", ln);
    size_t sp = line.find_first_of(" \t");
    std::string_view mnemonic = sp == std::string_view::npos ? line : line.substr(0, sp);
    std::string_view rest = sp == std::string_view::npos ? std::string_view{}
                                                         : trim(line.substr(sp + 1));
    Instruction ins;
    bool found = false;
    for (const auto& c : kConds) {
      if (mnemonic == c.name) {
        ins.op = Opcode::Jcc;
        ins.cond = c.cond;
        found = true;
        break;
      }
    }
    if (!found) {
      for (const auto& o : kOps) {
        if (mnemonic == o.name) {
          ins.op = o.op;
          found = true;
          break;
        }
      }
    }
    if (!found) throw ParseError("unknown opcode '" + std::string(mnemonic) + "'", ln);

    auto parts = split_operands(rest);
    auto need = [&](size_t n) {
      if (parts.size() != n)
        throw ParseError("opcode '" + std::string(mnemonic) + "' expects " +
                             std::to_string(n) + " operand(s)",
                         ln);
    };
    switch (ins.op) {
      case Opcode::Mov:
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::And:
      case Opcode::Or:
      case Opcode::Xor:
      case Opcode::Cmp: {
        need(2);
        Operand d = parse_operand(parts[0], ln);
        Operand s = parse_operand(parts[1], ln);
        if (!d.is_reg()) throw ParseError("first operand must be a register", ln);
        if (s.is_mem()) throw ParseError("memory operand not allowed here", ln);
        ins.dst = d;
        ins.src = s;
        break;
      }
      case Opcode::Load: {
        need(2);
        Operand d = parse_operand(parts[0], ln);
        Operand s = parse_operand(parts[1], ln);
        if (!d.is_reg() || !s.is_mem())
          throw ParseError("load expects 'load rD, [rB+disp]'", ln);
        ins.dst = d;
        ins.src = s;
        break;
      }
      case Opcode::Store: {
        need(2);
        Operand d = parse_operand(parts[0], ln);
        Operand s = parse_operand(parts[1], ln);
        if (!d.is_mem() || s.is_mem())
          throw ParseError("store expects 'store [rB+disp], rS|imm'", ln);
        ins.dst = d;
        ins.src = s;
        break;
      }
      case Opcode::Jmp:
      case Opcode::Jcc:
        need(1);
        ins.target = parse_target(parts[0], ln);
        break;
      case Opcode::Call: {
        need(1);
        if (!is_ident(parts[0])) throw ParseError("call expects a function name", ln);
        pending_calls_.push_back({static_cast<uint32_t>(prog_.functions.size()),
                                  static_cast<uint32_t>(cur_->instrs.size()),
                                  std::string(parts[0]), ln});
        break;
      }
      case Opcode::Push: {
        need(1);
        Operand s = parse_operand(parts[0], ln);
        if (s.is_mem()) throw ParseError("push takes a register or immediate", ln);
        ins.src = s;
        break;
      }
      case Opcode::Pop: {
        need(1);
        Operand d = parse_operand(parts[0], ln);
        if (!d.is_reg()) throw ParseError("pop takes a register", ln);
        ins.dst = d;
        break;
      }
      case Opcode::Ret:
      case Opcode::Halt:
        need(0);
        break;
      case Opcode::Record: {
        if (!opts_.allow_records)
          throw ParseError("record is not allowed in source programs", ln);
        if (parts.size() == 1) {
          ins.site = static_cast<uint32_t>(parse_int(parts[0], ln));
        } else if (parts.size() == 2) {
          Operand d = parse_operand(parts[0], ln);
          if (!d.is_reg()) throw ParseError("record expects a register", ln);
          ins.dst = d;
          ins.site = static_cast<uint32_t>(parse_int(parts[1], ln));
        } else {
          throw ParseError("record expects 'record [rX,] site'", ln);
        }
        break;
      }
      case Opcode::TaintSource:
      case Opcode::TaintSink: {
        need(1);
        Operand d = parse_operand(parts[0], ln);
        if (d.is_imm()) throw ParseError("taint annotation needs a register or memory operand", ln);
        ins.dst = d;
        break;
      }
    }
    cur_->instrs.push_back(ins);
    line_of_.push_back(ln);
  }

  void resolve_jumps() {
    for (uint32_t fi = 0; fi < prog_.functions.size(); fi++) {
      Function& f = prog_.functions[fi];
      for (uint32_t i = 0; i < f.instrs.size(); i++) {
        Instruction& ins = f.instrs[i];
        if ((ins.op == Opcode::Jmp || ins.op == Opcode::Jcc) &&
            (ins.target == 0 || ins.target > f.instrs.size()))
          throw ParseError("jump target L" + std::to_string(ins.target) +
                               " out of range in function '" + f.name + "'",
                           0);
      }
    }
    for (const auto& pc : pending_calls_) {
      auto idx = prog_.find_function(pc.callee);
      if (!idx) throw ParseError("unresolved label '" + pc.callee + "'", pc.line);
      Instruction& ins = prog_.functions[pc.fn].instrs[pc.instr];
      ins.target = *idx;
    }
  }

  struct PendingCall {
    uint32_t fn, instr;
    std::string callee;
    int line;
  };

  std::string_view text_;
  ParseOptions opts_;
  Program prog_;
  std::optional<Function> cur_;
  int cur_line_ = 0;
  std::vector<int> line_of_;
  std::vector<PendingCall> pending_calls_;
};

}  // namespace

std::optional<uint32_t> Program::find_function(std::string_view name) const {
  for (uint32_t i = 0; i < functions.size(); i++)
    if (functions[i].name == name) return i;
  return std::nullopt;
}

std::string Program::label_name(Label l) const {
  return functions.at(l.fn).name + "@L" + std::to_string(l.idx);
}

Program parse_program(std::string_view text, const ParseOptions& opts) {
  return Parser(text, opts).run();
}

Program parse_program_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_program(ss.str(), opts);
}

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Mov: return "mov";
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::Add: return "add";
    case Opcode::Sub: return "sub";
    case Opcode::And: return "and";
    case Opcode::Or: return "or";
    case Opcode::Xor: return "xor";
    case Opcode::Cmp: return "cmp";
    case Opcode::Jmp: return "jmp";
    case Opcode::Jcc: return "jcc";
    case Opcode::Call: return "call";
    case Opcode::Ret: return "ret";
    case Opcode::Push: return "push";
    case Opcode::Pop: return "pop";
    case Opcode::Record: return "record";
    case Opcode::TaintSource: return "taint_source";
    case Opcode::TaintSink: return "taint_sink";
    case Opcode::Halt: return "halt";
  }
  return "?";
}

const char* cond_name(Cond c) {
  switch (c) {
    case Cond::Z: return "jz";
    case Cond::Nz: return "jnz";
    case Cond::Lt: return "jlt";
    case Cond::Ge: return "jge";
    case Cond::Le: return "jle";
    case Cond::Gt: return "jgt";
  }
  return "?";
}

std::string to_string(Register r) { return "r" + std::to_string(r.index); }

std::string to_string(const Operand& op) {
  switch (op.kind) {
    case Operand::Kind::Reg:
      return to_string(op.reg);
    case Operand::Kind::Imm:
      return std::to_string(op.value);
    case Operand::Kind::Mem: {
      std::string s = "[" + to_string(op.reg);
      if (op.value > 0) s += "+" + std::to_string(op.value);
      if (op.value < 0) s += std::to_string(op.value);
      return s + "]";
    }
  }
  return "?";
}

std::string to_string(const Instruction& ins) {
  std::string s;
  if (ins.op == Opcode::Jcc)
    s = cond_name(ins.cond);
  else
    s = opcode_name(ins.op);
  switch (ins.op) {
    case Opcode::Jmp:
    case Opcode::Jcc:
      s += " L" + std::to_string(ins.target);
      break;
    case Opcode::Call:
      s += " <fn" + std::to_string(ins.target) + ">";  // resolved by print_program
      break;
    case Opcode::Record:
      if (ins.dst) s += " " + to_string(*ins.dst) + ",";
      s += " " + std::to_string(ins.site);
      break;
    default:
      if (ins.dst) s += " " + to_string(*ins.dst);
      if (ins.src) s += (ins.dst ? ", " : " ") + to_string(*ins.src);
      break;
  }
  return s;
}

std::string print_program(const Program& p) {
  std::string out;
  for (const auto& f : p.functions) {
    out += f.name + ":\n";
    for (uint32_t i = 0; i < f.instrs.size(); i++) {
      const Instruction& ins = f.instrs[i];
      std::string text;
      if (ins.op == Opcode::Call) {
        text = "call " + p.functions.at(ins.target).name;
      } else {
        text = to_string(ins);
      }
      out += "  " + text + "\n";
    }
  }
  return out;
}

std::vector<BasicBlock> build_cfg(const Function& f) {
  const uint32_t n = f.size();
  std::vector<bool> leader(n + 1, false);
  leader[1] = true;
  for (uint32_t i = 1; i <= n; i++) {
    const Instruction& ins = f.at(i);
    if (ins.op == Opcode::Jmp || ins.op == Opcode::Jcc) leader[ins.target] = true;
    if (ins.is_terminator() && i + 1 <= n) leader[i + 1] = true;
  }
  std::vector<BasicBlock> blocks;
  for (uint32_t i = 1; i <= n; i++) {
    if (leader[i]) {
      BasicBlock b;
      b.leader = i;
      blocks.push_back(b);
    }
    blocks.back().last = i;
  }
  // local successor indices first; caller rewrites to global ids
  std::vector<uint32_t> block_at(n + 1, 0);
  for (uint32_t bi = 0; bi < blocks.size(); bi++)
    for (uint32_t i = blocks[bi].leader; i <= blocks[bi].last; i++) block_at[i] = bi;
  for (uint32_t bi = 0; bi < blocks.size(); bi++) {
    BasicBlock& b = blocks[bi];
    const Instruction& term = f.at(b.last);
    switch (term.op) {
      case Opcode::Jmp:
        b.succs = {block_at[term.target]};
        break;
      case Opcode::Jcc:
        // taken first, fallthrough second; dedupe if equal
        b.succs = {block_at[term.target]};
        if (b.last + 1 <= n && block_at[term.target] != block_at[b.last + 1])
          b.succs.push_back(block_at[b.last + 1]);
        break;
      case Opcode::Ret:
      case Opcode::Halt:
        break;
      default:
        if (b.last + 1 <= n) b.succs = {block_at[b.last + 1]};
        break;
    }
  }
  return blocks;
}

Cfg build_cfg(const Program& p) {
  Cfg cfg;
  cfg.per_fn.resize(p.functions.size());
  uint32_t next_id = 0;
  std::vector<uint32_t> base(p.functions.size(), 0);
  for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
    auto blocks = build_cfg(p.functions[fi]);
    base[fi] = next_id;
    FunctionCfg& fc = cfg.per_fn[fi];
    fc.blocks = std::move(blocks);
    fc.block_of_instr.assign(p.functions[fi].size(), 0);
    for (uint32_t bi = 0; bi < fc.blocks.size(); bi++) {
      BasicBlock& b = fc.blocks[bi];
      b.id = next_id++;
      b.fn = fi;
      for (auto& s : b.succs) s += base[fi];
      for (uint32_t i = b.leader; i <= b.last; i++) fc.block_of_instr[i - 1] = bi;
    }
  }
  cfg.by_id.resize(next_id);
  for (auto& fc : cfg.per_fn)
    for (auto& b : fc.blocks) cfg.by_id[b.id] = &b;
  return cfg;
}

}  // namespace tirtaint
