#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tirtaint/isa.hpp"

// Intra-procedural reaching definitions over registers, plus per-function
// register clobber summaries for call sites. Internal to the library.

namespace tirtaint {

inline constexpr uint32_t kEntryDef = 0;  // pseudo-definition at function entry

// Registers read / written by one instruction. Call clobbers come from the
// callee summary, so `clobbers` must cover the whole program.
struct RegEffects {
  std::vector<Register> uses;
  std::vector<Register> defs;
};

using ClobberMap = std::vector<std::array<bool, kNumRegisters>>;  // per function

// Fixpoint of registers written by each function directly or via callees.
ClobberMap compute_clobbers(const Program& p);

RegEffects reg_effects(const Instruction& ins, const ClobberMap& clobbers);

// reaching[use-site 1-based][reg] = set of defining sites (1-based index, or
// kEntryDef for the entry value), valid just before the instruction runs.
class ReachingDefs {
 public:
  ReachingDefs(const Function& f, const FunctionCfg& cfg, const ClobberMap& clobbers);

  // Definition sites of `r` reaching the entry of instruction idx1.
  const std::vector<uint32_t>& at(uint32_t idx1, Register r) const {
    return in_[(idx1 - 1) * kNumRegisters + r.index];
  }

 private:
  std::vector<std::vector<uint32_t>> in_;
};

}  // namespace tirtaint
