#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tirtaint/analysis.hpp"
#include "tirtaint/isa.hpp"

// Selective rewriting: inserts record instructions for a trace plan and
// emits the site map the decoder uses to translate packets back into
// original-program coordinates.

namespace tirtaint {

struct TracePointInfo {
  enum class Kind : uint8_t { RegisterValue, BlockMark };
  Kind kind = Kind::BlockMark;
  Label label;               // original site (records) or block leader (marks)
  Register reg{};            // register records
  bool post = false;         // value captured after the host instruction
  bool hoisted = false;      // relocated to a loop preheader
  bool preheader_mark = false;
  uint32_t loop_header = 0;  // hoisted/preheader entries: loop id
  uint32_t block = 0;        // original global block id this site certifies
};

struct TracePointMap {
  std::vector<TracePointInfo> sites;           // dense site ids
  std::vector<uint32_t> block_map;             // rewritten block id -> original

  std::string to_json(const Program& original) const;
  static TracePointMap from_json(const std::string& text, const Program& original);
};

class RewriteError : public std::runtime_error {
 public:
  explicit RewriteError(const std::string& what) : std::runtime_error(what) {}
};

struct RewriteResult {
  Program program;      // with record instructions and preheader blocks
  TracePointMap map;
};

// Inserts a register record next to each planned site (after the host
// unless the host redefines a pre-valued register), a block mark at the
// entry of each planned block unless a surviving register record already
// identifies it, and loop preheaders holding hoisted records.
RewriteResult rewrite(const Program& p, const TracePlan& plan);

}  // namespace tirtaint
