#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tirtaint/isa.hpp"

// Execution of TIR programs with a compressed trace-packet side channel.
// The packet stream models a hardware tracing unit: PSB sync points, TNT
// bit-vectors for conditional branches, TIP for indirect targets, and
// FUP(+PTW) pairs for record instructions. A bounded ring drops whole
// packets under pressure so trace loss is reproducible.

namespace tirtaint {

// Byte encoding (bit-exact):
//   PSB  = 0x82 0x02
//   PGE  = 0x84 + 4-byte LE site id
//   PGD  = 0x85
//   TNT  = 0x90 | bit-count(3 bits), then 1 payload byte (oldest bit = LSB)
//   TIP  = 0xA0 + 4-byte LE block id
//   FUP  = 0xB0 + 4-byte LE site id
//   PTW  = 0xC0 + 8-byte LE payload
enum class PacketKind : uint8_t { Psb, Pge, Pgd, Tnt, Tip, Fup, Ptw };

inline constexpr uint8_t kPsbByte0 = 0x82;
inline constexpr uint8_t kPsbByte1 = 0x02;
inline constexpr uint8_t kPgeByte = 0x84;
inline constexpr uint8_t kPgdByte = 0x85;
inline constexpr uint8_t kTntBase = 0x90;
inline constexpr uint8_t kTipByte = 0xA0;
inline constexpr uint8_t kFupByte = 0xB0;
inline constexpr uint8_t kPtwByte = 0xC0;

// Site id reserved for the trap flare the executor emits when a run ends
// with a fault: FUP(kTrapSite) + PTW(packed fault label).
inline constexpr uint32_t kTrapSite = 0xfffffffeu;

inline uint64_t pack_label(Label l) {
  return (static_cast<uint64_t>(l.fn) << 32) | l.idx;
}
inline Label unpack_label(uint64_t v) {
  return Label{static_cast<uint32_t>(v >> 32), static_cast<uint32_t>(v)};
}

using PacketStream = std::vector<uint8_t>;

enum class TraceMode : uint8_t { Selective, NaiveFull, None };

struct TraceConfig {
  uint64_t psb_period_bytes = 4096;  // >= 64
  uint64_t buffer_bytes = 0;         // 0 = unbounded; bounded mode drops packets
  TraceMode mode = TraceMode::Selective;
};

struct Flags {
  bool zf = false;
  bool lt = false;
};

struct MachineState {
  std::array<uint64_t, kNumRegisters> regs{};
  Flags flags;
  std::vector<uint64_t> mem;
  std::vector<Label> call_stack;
  Label ip{0, 1};
  bool halted = false;
};

struct InputImage {
  std::array<uint64_t, kNumRegisters> regs{};
  std::map<uint64_t, uint64_t> mem;  // sparse word image
  uint64_t mem_words_override = 0;   // 0 = use the program's size

  static InputImage parse(const std::string& text);
  static InputImage load(const std::string& path);
  std::string print() const;
};

class TrapError : public std::runtime_error {
 public:
  TrapError(std::string what, Label site)
      : std::runtime_error(std::move(what)), site_(site) {}
  Label site() const { return site_; }

 private:
  Label site_;
};

// Ground-truth event log kept by the executor for codec round-trip checks
// and for validating must-value facts against real executions.
struct ShadowEntry {
  enum class Kind : uint8_t { BlockEnter, RecordValue, MarkHit, BranchBit } kind;
  uint32_t block = 0;   // BlockEnter: global block id
  uint32_t site = 0;    // RecordValue/MarkHit: trace-point id
  uint64_t value = 0;   // RecordValue payload
  bool taken = false;   // BranchBit
};

struct ExecResult {
  MachineState state;
  PacketStream stream;
  uint64_t loss_count = 0;       // packets dropped by the bounded ring
  uint64_t steps = 0;
  bool trapped = false;
  Label trap_site{0, 0};
  std::string trap_reason;
  std::vector<ShadowEntry> shadow;  // only when keep_shadow_log set
};

struct ExecOptions {
  bool keep_shadow_log = false;
  uint64_t max_steps = 200'000'000;  // guard against runaway programs
  // Per-chunk sink for live pipelining; called with whole PSB segments.
  std::function<void(const uint8_t*, size_t)> segment_sink;
  // Optional must-value facts to validate: (label, reg) -> expected value.
  const std::map<std::pair<Label, Register>, uint64_t>* known_facts = nullptr;
  std::vector<std::string>* known_fact_violations = nullptr;
};

// Deterministic execution. Conditional branches append TNT bits and
// indirect transfers append TIP only in NaiveFull mode; record
// instructions emit FUP (block marks) or FUP+PTW (register values) in any
// tracing mode except None. Execution semantics are identical across
// modes. Traps end the run with a trap flare in the stream.
ExecResult execute(const Program& p, const InputImage& input, const TraceConfig& cfg,
                   const ExecOptions& opts = {});

// ---- Reference dynamic taint analysis (oracle) ----

struct TaintConfig;  // defined in taintgraph.hpp

struct SinkObservation {
  Label site;
  uint32_t occurrence = 0;  // 1-based per site
  bool tainted = false;
  std::string witness;      // edge list; empty for the oracle
};

struct TaintReport {
  std::vector<SinkObservation> sinks;
  bool trapped = false;
  Label trap_site{0, 0};
  std::string trap_reason;
  uint64_t tainted_sink_count = 0;
  uint64_t events_consumed = 0;
  double latency_seconds = 0.0;

  // Canonical serialization: verdicts only, no timing. Used for
  // cross-worker-count and pipeline-vs-batch equality checks.
  std::string canonical(const Program& p) const;
  // Verdict-only form (no witnesses) for oracle comparison.
  std::string verdicts(const Program& p) const;
};

// Full instruction-level shadow interpreter over the original program:
// per-register and per-word taint state, strong register updates, weak
// memory updates (a store taints its word only when the stored value is
// tainted; immediate stores clear it).
TaintReport reference_dta(const Program& p, const InputImage& input,
                          const TaintConfig& config, uint64_t max_steps = 200'000'000);

}  // namespace tirtaint
