#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tirtaint/rewriter.hpp"
#include "tirtaint/tracer.hpp"

// Packet-stream decoding: PSB-delimited segments are independent, so they
// decode in parallel and merge by ordinal.

namespace tirtaint {

struct TraceEvent {
  enum class Kind : uint8_t { BlockHit, RegisterValue, BranchBit };
  Kind kind = Kind::BlockHit;
  uint32_t block = 0;       // BlockHit: original-program block id
  uint32_t site = kNoSite;  // RegisterValue / mark-derived BlockHit: site id
  uint64_t value = 0;       // RegisterValue payload
  bool taken = false;       // BranchBit
  bool from_tip = false;    // BlockHit decoded from a TIP packet
  uint32_t segment = 0;

  friend bool operator==(const TraceEvent& a, const TraceEvent& b) {
    return a.kind == b.kind && a.block == b.block && a.site == b.site &&
           a.value == b.value && a.taken == b.taken && a.from_tip == b.from_tip;
  }
};

std::string to_string(const TraceEvent& e);

struct Segment {
  size_t start = 0;  // byte offset of the PSB
  size_t end = 0;    // one past the last byte
  uint32_t ordinal = 0;
};

class StreamError : public std::runtime_error {
 public:
  StreamError(const std::string& what, size_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)),
        offset_(offset) {}
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

// One segment per PSB occurrence; segments tile the stream exactly.
std::vector<Segment> split_segments(const PacketStream& stream);

// Segment-local decoding. FUP marks become block hits, FUP+PTW pairs become
// register values, TIPs become block hits in original coordinates, TNT
// packets expand to branch bits. Unknown packet bytes are skipped.
std::vector<TraceEvent> decode_segment(const PacketStream& stream, const Segment& seg,
                                       const TracePointMap& map);

std::vector<TraceEvent> decode_sequential(const PacketStream& stream,
                                          const TracePointMap& map);

// Segments are distributed round-robin over workers; the merged order is
// (segment ordinal, local index), independent of scheduling.
std::vector<TraceEvent> decode_parallel(const PacketStream& stream,
                                        const TracePointMap& map, unsigned workers);

}  // namespace tirtaint
