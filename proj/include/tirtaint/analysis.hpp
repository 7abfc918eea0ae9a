#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tirtaint/isa.hpp"
#include "tirtaint/taintgraph.hpp"

// Static identification analysis: builds the value-flow graph, runs the
// must value-set analysis for must-alias enrichment and constant facts,
// and derives the minimal trace-point set (register roots per weakly
// connected component, dominator-selected blocks over the reduced CFG,
// skipped functions, and once-loop hoisting directives).

namespace tirtaint {

// ---- value-flow graph ----

struct VfgNode {
  Label site;
  bool is_mem = false;
  Register reg{};       // register occurrence, or base register of a memory one
  bool is_def = false;  // def (post-instruction value) vs use (pre value)

  friend bool operator<(const VfgNode& a, const VfgNode& b) {
    if (a.site != b.site) return a.site < b.site;
    if (a.is_mem != b.is_mem) return a.is_mem < b.is_mem;
    if (!(a.reg == b.reg)) return a.reg < b.reg;
    return a.is_def < b.is_def;
  }
  friend bool operator==(const VfgNode& a, const VfgNode& b) {
    return a.site == b.site && a.is_mem == b.is_mem && a.reg == b.reg &&
           a.is_def == b.is_def;
  }
};

enum class VfgEdgeKind : uint8_t { Value, Address };

struct VfgEdge {
  uint32_t from = 0;
  uint32_t to = 0;
  VfgEdgeKind kind = VfgEdgeKind::Value;
};

// How a register node's runtime value can be obtained during replay.
enum class ValueKind : uint8_t {
  Known,       // statically known (immediate or must-value fact)
  Computable,  // derivable from value-edge predecessors
  Opaque,      // must be recorded if needed (loads, pops, clobbers, entry uses)
};

struct Vfg {
  uint32_t fn = 0;
  std::vector<VfgNode> nodes;
  std::vector<VfgEdge> edges;
  std::vector<ValueKind> kind;          // per node
  std::vector<uint32_t> wcc;            // per node: weakly connected component id
  uint32_t wcc_count = 0;
  std::vector<bool> relevant_mem;       // per node: memory node needed for taint
  std::vector<std::vector<uint32_t>> value_preds;  // per node
  std::vector<uint64_t> known_values_;  // per node, valid when kind == Known
  std::vector<bool> needed_use_;        // closure seeds from relevant memory

  uint32_t find(const VfgNode& n) const;
  std::optional<uint32_t> try_find(const VfgNode& n) const;
  void recompute_wccs();
};

// ---- must value-set analysis ----

struct LatticeValue {
  enum class Kind : uint8_t { Top, Known, Bottom } kind = Kind::Top;
  uint64_t value = 0;

  static LatticeValue top() { return {Kind::Top, 0}; }
  static LatticeValue bottom() { return {Kind::Bottom, 0}; }
  static LatticeValue known(uint64_t v) { return {Kind::Known, v}; }
  bool is_known() const { return kind == Kind::Known; }

  friend bool operator==(const LatticeValue& a, const LatticeValue& b) {
    return a.kind == b.kind && (a.kind != Kind::Known || a.value == b.value);
  }
  // Merge per the constant-propagation lattice: Top is the unvisited
  // pre-state and acts as identity; differing known values go invalid.
  LatticeValue meet(const LatticeValue& o) const {
    if (kind == Kind::Top) return o;
    if (o.kind == Kind::Top) return *this;
    if (kind == Kind::Bottom || o.kind == Kind::Bottom) return bottom();
    return value == o.value ? *this : bottom();
  }
};

struct MvsaResult {
  // register values known at instruction entry / exit
  std::map<std::pair<Label, Register>, uint64_t> known_in;
  std::map<std::pair<Label, Register>, uint64_t> known_out;
  // must-alias value edges between def occurrences (from, to)
  std::vector<std::pair<VfgNode, VfgNode>> alias_edges;
};

// ---- flow-insensitive may-taint relevance ----

struct MayTaintInfo {
  std::vector<std::array<bool, kNumRegisters>> reg;  // per function
  bool mem_top = false;                 // any address may be tainted
  std::set<uint64_t> mem_set;           // else: concrete may-tainted addresses
  std::vector<bool> summarized_fn;      // callee taint replaced by summary

  bool mem_may_overlap(std::optional<uint64_t> known_addr) const {
    if (mem_top) return true;
    if (!known_addr) return !mem_set.empty();
    return mem_set.count(*known_addr) > 0;
  }
};

// ---- trace plan ----

struct RegPoint {
  Label site;
  Register reg{};
  bool post = false;  // record the post-instruction value (def traces)

  friend bool operator<(const RegPoint& a, const RegPoint& b) {
    if (a.site != b.site) return a.site < b.site;
    if (!(a.reg == b.reg)) return a.reg < b.reg;
    return a.post < b.post;
  }
  friend bool operator==(const RegPoint& a, const RegPoint& b) {
    return a.site == b.site && a.reg == b.reg && a.post == b.post;
  }
};

enum class LoopKind : uint8_t { NonOnce, BlOnce, RegOnce, FullOnce };
const char* loop_kind_name(LoopKind k);

struct LoopDirective {
  uint32_t header_block = 0;  // loop id: global block id of the header
  LoopKind kind = LoopKind::NonOnce;
  std::vector<RegPoint> hoisted_regs;  // recorded once in the preheader
  bool hoist_blocks = false;           // body marks replaced by a preheader mark
};

struct PlanOptions {
  bool reg_opt = true;   // WCC-root elimination vs tracing memory registers directly
  bool bl_opt = true;    // reduced-CFG dominator selection vs all branch targets
  bool loop_opt = true;  // once-loop hoisting
};

struct TracePlan {
  std::vector<RegPoint> registers;
  std::vector<uint32_t> blocks;  // global block ids to mark
  std::vector<std::string> skipped_functions;
  std::vector<LoopDirective> loops;
  PlanOptions options;

  size_t point_count() const;
  std::string to_json(const Program& p) const;
  static TracePlan from_json(const std::string& text, const Program& p);
};

// ---- loops ----

struct LoopInfo {
  uint32_t header = 0;              // local block index within the function
  std::vector<uint32_t> body;       // local block indices, header included
  std::vector<uint32_t> latches;    // local block indices with back edges
  std::vector<Register> ivs;        // induction variables
  std::vector<Label> iv_defs;       // their stride updates inside the loop
};

// ---- operations ----

Vfg build_vfg(const Program& p, uint32_t fn, const Cfg& cfg);

MvsaResult run_mvsa(const Program& p, uint32_t fn, const Cfg& cfg);

// Adds must-alias value edges and upgrades nodes with known values.
void enrich_vfg(Vfg& vfg, const MvsaResult& mvsa);

// Marks memory nodes whose runtime address the replay will need.
void mark_relevant_memory(Vfg& vfg, const Program& p, const Cfg& cfg,
                          const TaintConfig& config, const MayTaintInfo& may);

MayTaintInfo compute_may_taint(const Program& p, const Cfg& cfg,
                               const TaintConfig& config);

// Trace-point registers: for every weakly connected component holding a
// relevant address edge, the opaque sources feeding those addresses.
std::vector<RegPoint> identify_registers(const Vfg& vfg);

std::vector<uint32_t> compute_taint_unchanged_blocks(const Program& p, uint32_t fn,
                                                     const Cfg& cfg,
                                                     const TaintConfig& config);

// Reduced CFG: taint-unchanged blocks removed, edges relinked. Indices are
// positions in `kept`; kVirtualExit marks exits.
struct ReducedCfg {
  uint32_t fn = 0;
  std::vector<uint32_t> kept;                    // global block ids
  std::vector<std::vector<uint32_t>> succs;      // per kept position
  std::vector<bool> exits;                       // can leave the function from here
  std::vector<uint32_t> entry;                   // kept positions reachable first
  bool entry_exits = false;                      // function may run with no kept block

  std::optional<uint32_t> pos_of(uint32_t block_id) const;
};

ReducedCfg build_reduced_cfg(const Program& p, uint32_t fn, const Cfg& cfg,
                             const std::vector<uint32_t>& removed_blocks);

// Weighted dominator selection: dominance graph over the reduced CFG, one
// maximal-weight block per SCC, ties to the lowest block id.
std::vector<uint32_t> select_target_blocks(const ReducedCfg& rcfg);

std::vector<std::string> eliminate_functions(const Program& p, const Cfg& cfg,
                                             const TaintConfig& config);

std::vector<LoopInfo> find_loops(const Program& p, uint32_t fn, const Cfg& cfg);

LoopKind classify_loop(const LoopInfo& loop, const Vfg& vfg, const Program& p,
                       uint32_t fn, const Cfg& cfg, const TaintConfig& config,
                       const MayTaintInfo& may);

TracePlan plan_trace_points(const Program& p, const TaintConfig& config,
                            const PlanOptions& options = {});

// SelectiveTaint-style baseline: every taint-relevant memory register and
// both successors of every conditional branch, no loop hoisting.
TracePlan conservative_plan(const Program& p, const TaintConfig& config);

// Record every memory register and branch target regardless of taint.
TracePlan naive_plan(const Program& p, const TaintConfig& config);

class AnalysisError : public std::runtime_error {
 public:
  explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tirtaint
