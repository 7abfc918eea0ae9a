#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// TIR: a small 64-bit register machine used as the analysis substrate.
// Eight general-purpose registers r0..r7; r7 doubles as the stack pointer
// for push/pop. Memory is word-addressed with a flat, configurable size.

namespace tirtaint {

inline constexpr int kNumRegisters = 8;
inline constexpr int kStackRegister = 7;
inline constexpr uint64_t kDefaultMemWords = 1u << 16;
inline constexpr uint32_t kNoSite = 0xffffffffu;

enum class Opcode : uint8_t {
  Mov,
  Load,
  Store,
  Add,
  Sub,
  And,
  Or,
  Xor,
  Cmp,
  Jmp,
  Jcc,
  Call,
  Ret,
  Push,
  Pop,
  Record,
  TaintSource,
  TaintSink,
  Halt,
};

enum class Cond : uint8_t { Z, Nz, Lt, Ge, Le, Gt };

struct Register {
  uint8_t index = 0;

  friend bool operator==(Register a, Register b) { return a.index == b.index; }
  friend bool operator!=(Register a, Register b) { return a.index != b.index; }
  friend bool operator<(Register a, Register b) { return a.index < b.index; }
};

std::string to_string(Register r);

// Register, immediate, or memory ([base + disp]) operand. Memory operands
// always name exactly one base register.
struct Operand {
  enum class Kind : uint8_t { Reg, Imm, Mem };
  Kind kind = Kind::Imm;
  Register reg{};     // Reg: the register; Mem: the base register
  int64_t value = 0;  // Imm: the immediate; Mem: signed displacement

  static Operand make_reg(Register r) { return {Kind::Reg, r, 0}; }
  static Operand make_imm(int64_t v) { return {Kind::Imm, {}, v}; }
  static Operand make_mem(Register base, int32_t disp = 0) {
    return {Kind::Mem, base, disp};
  }
  bool is_reg() const { return kind == Kind::Reg; }
  bool is_imm() const { return kind == Kind::Imm; }
  bool is_mem() const { return kind == Kind::Mem; }

  friend bool operator==(const Operand& a, const Operand& b) {
    return a.kind == b.kind && a.reg == b.reg && a.value == b.value;
  }
};

std::string to_string(const Operand& op);

// Source location: function index plus 1-based instruction index. The
// 1-based index is what label names like "main@L3" refer to.
struct Label {
  uint32_t fn = 0;
  uint32_t idx = 0;

  friend bool operator==(Label a, Label b) { return a.fn == b.fn && a.idx == b.idx; }
  friend bool operator!=(Label a, Label b) { return !(a == b); }
  friend bool operator<(Label a, Label b) {
    return a.fn != b.fn ? a.fn < b.fn : a.idx < b.idx;
  }
};

struct Instruction {
  Opcode op = Opcode::Halt;
  Cond cond = Cond::Z;               // Jcc only
  std::optional<Operand> dst;        // first operand
  std::optional<Operand> src;        // second operand
  uint32_t target = 0;               // Jmp/Jcc: instruction index; Call: function index
  uint32_t site = kNoSite;           // Record only: dense trace-point id

  bool is_terminator() const {
    return op == Opcode::Jmp || op == Opcode::Jcc || op == Opcode::Ret ||
           op == Opcode::Halt;
  }
  bool is_record() const { return op == Opcode::Record; }
  // Register records carry the register in dst; block marks carry none.
  bool is_register_record() const { return op == Opcode::Record && dst.has_value(); }
};

struct Function {
  std::string name;
  std::vector<Instruction> instrs;  // instruction i has 1-based index i+1

  uint32_t size() const { return static_cast<uint32_t>(instrs.size()); }
  const Instruction& at(uint32_t idx1) const { return instrs.at(idx1 - 1); }
  Instruction& at(uint32_t idx1) { return instrs.at(idx1 - 1); }
};

// Half-open over 1-based indices: instructions [leader, end].
struct BasicBlock {
  uint32_t id = 0;       // program-global dense block id
  uint32_t fn = 0;
  uint32_t leader = 0;   // 1-based index of the first instruction
  uint32_t last = 0;     // 1-based index of the last instruction
  std::vector<uint32_t> succs;  // global block ids
};

struct FunctionCfg {
  std::vector<BasicBlock> blocks;             // in leader order
  std::vector<uint32_t> block_of_instr;       // per 1-based index -> local block pos
  uint32_t block_at(uint32_t idx1) const { return block_of_instr.at(idx1 - 1); }
};

struct Program {
  std::vector<Function> functions;
  uint32_t entry = 0;  // index into functions
  uint64_t mem_words = kDefaultMemWords;

  const Function& fn(uint32_t i) const { return functions.at(i); }
  const Instruction& at(Label l) const { return functions.at(l.fn).at(l.idx); }
  std::optional<uint32_t> find_function(std::string_view name) const;
  std::string label_name(Label l) const;
};

// Program-wide CFG with a global block numbering.
struct Cfg {
  std::vector<FunctionCfg> per_fn;
  std::vector<const BasicBlock*> by_id;  // global id -> block

  const BasicBlock& block(uint32_t id) const { return *by_id.at(id); }
  uint32_t total_blocks() const { return static_cast<uint32_t>(by_id.size()); }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string msg, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + std::move(msg)),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct ParseOptions {
  // Record instructions are only legal in rewritten programs.
  bool allow_records = false;
};

Program parse_program(std::string_view text, const ParseOptions& opts = {});
Program parse_program_file(const std::string& path, const ParseOptions& opts = {});

std::string print_program(const Program& p);
std::string to_string(const Instruction& ins);

// Leaders: function entry, every jump target, every instruction following a
// terminator. Successors per terminator kind (jmp: 1, jcc: 2, ret/halt: 0,
// fallthrough: 1).
std::vector<BasicBlock> build_cfg(const Function& f);

// Whole-program CFG with dense global block ids.
Cfg build_cfg(const Program& p);

const char* opcode_name(Opcode op);
const char* cond_name(Cond c);

}  // namespace tirtaint
