#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tirtaint/isa.hpp"

// Static taint graph: one graph per function, nodes are register/memory
// occurrences split into use and def polarity, edges carry one of the five
// propagation labels (a, d, o, s, bl).

namespace tirtaint {

struct Cfg;

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Where a summary rule applies: a specific register, or the memory region
// described by the call-site argument registers (r0 = dst, r1 = src,
// r2 = length in words).
struct SummarySlot {
  bool is_mem = false;
  Register reg{};
};

enum class SummaryKind : uint8_t { Copy, Or, Sanitize };

struct Summary {
  SummaryKind kind = SummaryKind::Copy;
  SummarySlot dst;
  std::optional<SummarySlot> src;  // absent for sanitize
};

// A source/sink endpoint: a register or the memory word addressed by the
// instruction's memory operand at runtime.
struct TaintPoint {
  Label site;
  bool is_mem = false;
  Register reg{};

  friend bool operator<(const TaintPoint& a, const TaintPoint& b) {
    if (a.site != b.site) return a.site < b.site;
    if (a.is_mem != b.is_mem) return a.is_mem < b.is_mem;
    return a.reg < b.reg;
  }
  friend bool operator==(const TaintPoint& a, const TaintPoint& b) {
    return a.site == b.site && a.is_mem == b.is_mem && a.reg == b.reg;
  }
};

struct TaintConfig {
  std::vector<TaintPoint> sources;
  std::vector<TaintPoint> sinks;
  std::vector<uint64_t> pretainted_mem;          // addresses tainted before execution
  std::map<std::string, Summary> summaries;      // intrinsic name -> rule
  bool implicit_control_taint = false;           // bl-edge implicit propagation

  bool is_source(Label l) const;
  bool is_sink(Label l) const;

  // Text format, one directive per line:
  //   source <fn>@L<idx> <reg|mem>
  //   sink <fn>@L<idx> <reg|mem>
  //   taintmem <addr>
  //   summary <name> <copy|or> <reg|mem> <reg|mem>
  //   summary <name> sanitize <reg|mem>
  //   implicit <on|off>
  static TaintConfig parse(const std::string& text);
  static TaintConfig load(const std::string& path);
  std::string print(const Program& p) const;

  // Validates sites, resolves taint_source/taint_sink pseudo-ops in the
  // program into additional source/sink entries, and checks that every
  // summarized name that resolves to a program function is consistent.
  void bind(const Program& p);

  // Entries parsed from text but not yet resolved against a program.
  struct RawPointHandle {
    std::string fn;
    uint32_t idx = 0;
    bool is_mem = false;
    Register reg{};
  };
  std::vector<RawPointHandle> raw_sources_, raw_sinks_;
};

// ---- Taint graph ----

struct TaintNode {
  Label site;
  bool is_mem = false;   // memory occurrence vs register occurrence
  Register reg{};        // register occurrence, or base register for memory
  bool is_def = false;   // polarity: define/to node vs use/from node
  bool source_mark = false;
  bool sink_mark = false;

  friend bool operator==(const TaintNode& a, const TaintNode& b) {
    return a.site == b.site && a.is_mem == b.is_mem && a.reg == b.reg &&
           a.is_def == b.is_def;
  }
  friend bool operator<(const TaintNode& a, const TaintNode& b) {
    if (!(a.site == b.site)) return a.site < b.site;
    if (a.is_mem != b.is_mem) return a.is_mem < b.is_mem;
    if (!(a.reg == b.reg)) return a.reg < b.reg;
    return a.is_def < b.is_def;
  }
};

enum class EdgeLabel : uint8_t { Assign, Deref, Or, Sanitize, Block };

struct TaintEdge {
  uint32_t from = 0;  // node index
  uint32_t to = 0;
  EdgeLabel label = EdgeLabel::Assign;
  uint32_t guard_block = 0;  // Block label: global block id of the guard
};

struct TaintGraph {
  uint32_t fn = 0;
  std::vector<TaintNode> nodes;
  std::vector<TaintEdge> edges;

  uint32_t node_index(const TaintNode& n) const;
  std::string dump(const Program& p) const;  // one edge per line
};

// Builds the per-function taint graph: a-edges for copies and loads/stores,
// d-edges from base registers into memory nodes, o-edges through arithmetic
// def nodes, s-edges for xor-with-self and immediate loads, bl-guarded
// edges for dataflow crossing conditional control flow, and bl(callee
// entry) edges linking call sites to callee entries.
TaintGraph build_taint_graph(const Program& p, uint32_t fn, const Cfg& cfg,
                             const TaintConfig& config);

std::vector<TaintGraph> build_taint_graphs(const Program& p, const Cfg& cfg,
                                           const TaintConfig& config);

const char* edge_label_name(EdgeLabel l);

}  // namespace tirtaint
