#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "tirtaint/analysis.hpp"
#include "tirtaint/isa.hpp"

// Deterministic model shared by the planner, the rewriter, and the replay
// engine: the reduced CFGs, the ordered trace-point (token) layout each
// kept block emits, once-loop regions, and the first-token sets used to
// resolve control flow from the event stream.

namespace tirtaint {

struct Token {
  bool is_mark = false;
  Label label;               // record site, or block-leader label for marks
  Register reg{};            // register records only
  bool post = false;         // value captured after the host instruction
  bool hoisted = false;      // register record relocated to a loop preheader
  bool preheader = false;    // mark standing for loop entry
  uint32_t loop_header = 0;  // hoisted/preheader tokens: loop id (header block)

  friend bool operator<(const Token& a, const Token& b) {
    if (a.is_mark != b.is_mark) return a.is_mark < b.is_mark;
    if (a.label != b.label) return a.label < b.label;
    if (!(a.reg == b.reg)) return a.reg < b.reg;
    if (a.post != b.post) return a.post < b.post;
    if (a.hoisted != b.hoisted) return a.hoisted < b.hoisted;
    if (a.preheader != b.preheader) return a.preheader < b.preheader;
    return a.loop_header < b.loop_header;
  }
  friend bool operator==(const Token& a, const Token& b) {
    return !(a < b) && !(b < a);
  }
};

// One kept block's emission sequence: tokens interleaved with call sites.
struct BlockItem {
  enum class Kind : uint8_t { Token, Call } kind = Kind::Token;
  uint32_t token = 0;   // index into PlanModel::tokens
  uint32_t callee = 0;  // Kind::Call
  uint32_t instr = 0;   // 1-based host instruction index
};

struct LoopRegion {
  uint32_t fn = 0;
  uint32_t header_block = 0;  // global id
  LoopKind kind = LoopKind::NonOnce;
  bool hoist_blocks = false;
  std::vector<uint32_t> body_blocks;       // global ids (original CFG)
  std::vector<uint32_t> preheader_tokens;  // emitted on loop entry, in order
  // full-once only: structural once-walk over kept positions
  std::vector<uint32_t> cycle_pos;         // kept positions, starting block first
  std::optional<uint32_t> exit_pos;        // kept position after the loop
  bool exit_escapes = false;               // loop exit leaves the function
};

// Possible first observable events along a path: trace-point tokens,
// return TIPs with statically known target blocks, an escaping return
// whose TIP value depends on the caller, or the end of the stream.
struct FirstSet {
  std::set<uint32_t> tokens;
  std::set<uint32_t> tips;  // original block ids of known return targets
  bool escapes = false;     // leaves this function via ret (caller-valued TIP)
  bool eof = false;         // program may stop here (halt or entry return)

  void merge(const FirstSet& o) {
    tokens.insert(o.tokens.begin(), o.tokens.end());
    tips.insert(o.tips.begin(), o.tips.end());
    escapes = escapes || o.escapes;
    eof = eof || o.eof;
  }
  friend bool operator==(const FirstSet& a, const FirstSet& b) {
    return a.tokens == b.tokens && a.tips == b.tips && a.escapes == b.escapes &&
           a.eof == b.eof;
  }
};

enum : uint8_t { kExitRet = 1, kExitEof = 2 };

struct FnModel {
  ReducedCfg rcfg;
  std::vector<std::vector<BlockItem>> items;  // per kept position
  // decision tables: per kept position, FIRST of each successor (same order
  // as rcfg.succs)
  std::vector<std::vector<FirstSet>> succ_first;
  std::vector<bool> marked;        // per kept position
  std::vector<uint8_t> exit_kind;  // per kept position: kExitRet | kExitEof bits
  // registers written inside removed blocks along each reduced edge; the
  // replay drops their tracked values when crossing
  std::vector<std::vector<uint8_t>> succ_clobber;
  uint8_t entry_clobber = 0;
};

struct PlanModel {
  std::vector<Token> tokens;
  std::map<Token, uint32_t> token_index;
  std::vector<FnModel> fns;
  std::vector<LoopRegion> loops;
  std::map<uint32_t, uint32_t> loop_by_header;  // header block id -> loops idx
  std::vector<bool> fn_skipped;
  std::vector<FirstSet> fn_first;    // per function: first events of a call
  std::set<uint32_t> skipped_tips;   // return-target blocks inside skipped code
  std::vector<std::set<uint32_t>> caller_blocks;  // per fn: blocks calling it

  // value facts for the replay engine
  std::map<std::pair<Label, Register>, uint64_t> known_in;
  std::map<std::pair<Label, Register>, uint64_t> known_out;
  // memory operands whose runtime address the replay must resolve
  std::set<Label> relevant_mem_sites;

  // innermost hoist region whose body contains the block, if any
  std::optional<uint32_t> region_of_block(uint32_t block_id) const {
    std::optional<uint32_t> best;
    for (uint32_t li = 0; li < loops.size(); li++) {
      const LoopRegion& r = loops[li];
      if (r.preheader_tokens.empty() && !r.hoist_blocks) continue;
      bool inside = false;
      for (uint32_t b : r.body_blocks)
        if (b == block_id) inside = true;
      if (!inside) continue;
      if (!best || r.body_blocks.size() < loops[*best].body_blocks.size()) best = li;
    }
    return best;
  }

  uint32_t token_id(const Token& t) const {
    auto it = token_index.find(t);
    if (it == token_index.end()) throw AnalysisError("unknown trace-point token");
    return it->second;
  }
  std::optional<uint32_t> try_token_id(const Token& t) const {
    auto it = token_index.find(t);
    if (it == token_index.end()) return std::nullopt;
    return it->second;
  }
};

// Builds the model for a finished plan. Throws AnalysisError when the plan
// cannot support unambiguous replay (used as a corruption check).
PlanModel build_plan_model(const Program& p, const Cfg& cfg, const TaintConfig& config,
                           const TracePlan& plan, bool validate = true);

// Adds block marks until every control decision is resolvable from the
// event stream, and cancels loop hoists that cannot be disambiguated.
void repair_plan(const Program& p, const Cfg& cfg, const TaintConfig& config,
                 TracePlan& plan);

}  // namespace tirtaint
