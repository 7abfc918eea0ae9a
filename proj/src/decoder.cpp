#include "tirtaint/decoder.hpp"

#include <thread>

namespace tirtaint {

std::string to_string(const TraceEvent& e) {
  switch (e.kind) {
    case TraceEvent::Kind::BlockHit:
      return (e.from_tip ? "tip-hit " : "block-hit ") + std::to_string(e.block);
    case TraceEvent::Kind::RegisterValue:
      return "value site=" + std::to_string(e.site) + " 0x" + [&] {
        char buf[17];
        snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(e.value));
        return std::string(buf);
      }();
    case TraceEvent::Kind::BranchBit:
      return e.taken ? "branch taken" : "branch not-taken";
  }
  return "?";
}

std::vector<Segment> split_segments(const PacketStream& stream) {
  if (stream.empty()) return {};
  if (stream.size() < 2 || stream[0] != kPsbByte0 || stream[1] != kPsbByte1)
    throw StreamError("stream does not start with PSB", 0);
  std::vector<Segment> out;
  size_t i = 0;
  while (i < stream.size()) {
    if (stream[i] == kPsbByte0 && i + 1 < stream.size() && stream[i + 1] == kPsbByte1) {
      if (!out.empty()) out.back().end = i;
      Segment s;
      s.start = i;
      s.ordinal = static_cast<uint32_t>(out.size());
      out.push_back(s);
      i += 2;
      continue;
    }
    uint8_t b = stream[i];
    size_t len = 1;
    if (b == kPgeByte) len = 5;
    else if (b == kPgdByte) len = 1;
    else if ((b & 0xF8) == kTntBase) len = 2;
    else if (b == kTipByte) len = 5;
    else if (b == kFupByte) len = 5;
    else if (b == kPtwByte) len = 9;
    i += len;  // never split packets: lengths bound the scan
  }
  if (!out.empty()) out.back().end = stream.size();
  return out;
}

std::vector<TraceEvent> decode_segment(const PacketStream& stream, const Segment& seg,
                                       const TracePointMap& map) {
  std::vector<TraceEvent> out;
  size_t i = seg.start;
  auto need = [&](size_t n) {
    if (i + n > seg.end) throw StreamError("truncated packet", i);
  };
  auto read_u32 = [&](size_t at) {
    uint32_t v = 0;
    for (int k = 0; k < 4; k++) v |= static_cast<uint32_t>(stream[at + k]) << (8 * k);
    return v;
  };
  need(2);
  if (stream[i] != kPsbByte0 || stream[i + 1] != kPsbByte1)
    throw StreamError("segment does not start with PSB", i);
  i += 2;
  while (i < seg.end) {
    uint8_t b = stream[i];
    if (b == kPgeByte) {
      need(5);
      i += 5;
    } else if (b == kPgdByte) {
      i += 1;
    } else if ((b & 0xF8) == kTntBase) {
      need(2);
      uint32_t count = b & 0x07;
      if (count == 0 || count > 6) throw StreamError("bad TNT bit count", i);
      uint8_t bits = stream[i + 1];
      for (uint32_t k = 0; k < count; k++) {
        TraceEvent e;
        e.kind = TraceEvent::Kind::BranchBit;
        e.taken = (bits >> k) & 1;
        e.segment = seg.ordinal;
        out.push_back(e);
      }
      i += 2;
    } else if (b == kTipByte) {
      need(5);
      uint32_t blk = read_u32(i + 1);
      if (blk >= map.block_map.size()) throw StreamError("TIP names unknown block", i);
      TraceEvent e;
      e.kind = TraceEvent::Kind::BlockHit;
      e.block = map.block_map[blk];
      e.from_tip = true;
      e.segment = seg.ordinal;
      out.push_back(e);
      i += 5;
    } else if (b == kFupByte) {
      need(5);
      uint32_t site = read_u32(i + 1);
      size_t fup_at = i;
      i += 5;
      if (site == kTrapSite) {
        if (i >= seg.end || stream[i] != kPtwByte)
          throw StreamError("trap flare without payload", fup_at);
        need(9);
        uint64_t v = 0;
        for (int k = 0; k < 8; k++) v |= static_cast<uint64_t>(stream[i + 1 + k]) << (8 * k);
        TraceEvent e;
        e.kind = TraceEvent::Kind::RegisterValue;
        e.site = kTrapSite;
        e.value = v;
        e.segment = seg.ordinal;
        out.push_back(e);
        i += 9;
        continue;
      }
      if (site >= map.sites.size()) throw StreamError("FUP names unknown site", fup_at);
      const TracePointInfo& info = map.sites[site];
      if (info.kind == TracePointInfo::Kind::RegisterValue) {
        if (i >= seg.end || stream[i] != kPtwByte)
          throw StreamError("register record without PTW", fup_at);
        need(9);
        uint64_t v = 0;
        for (int k = 0; k < 8; k++) v |= static_cast<uint64_t>(stream[i + 1 + k]) << (8 * k);
        TraceEvent e;
        e.kind = TraceEvent::Kind::RegisterValue;
        e.site = site;
        e.value = v;
        e.segment = seg.ordinal;
        out.push_back(e);
        i += 9;
      } else {
        TraceEvent e;
        e.kind = TraceEvent::Kind::BlockHit;
        e.block = info.block;
        e.site = site;
        e.segment = seg.ordinal;
        out.push_back(e);
      }
    } else if (b == kPtwByte) {
      throw StreamError("PTW without a preceding FUP", i);
    } else {
      i += 1;  // unknown packet kind: skip for forward compatibility
    }
  }
  return out;
}

std::vector<TraceEvent> decode_sequential(const PacketStream& stream,
                                          const TracePointMap& map) {
  std::vector<TraceEvent> out;
  for (const Segment& seg : split_segments(stream)) {
    auto part = decode_segment(stream, seg, map);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<TraceEvent> decode_parallel(const PacketStream& stream,
                                        const TracePointMap& map, unsigned workers) {
  if (workers == 0) throw std::invalid_argument("workers must be positive");
  auto segments = split_segments(stream);
  if (workers == 1 || segments.size() <= 1) return decode_sequential(stream, map);

  std::vector<std::vector<TraceEvent>> results(segments.size());
  std::vector<std::string> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; w++) {
    pool.emplace_back([&, w] {
      try {
        for (size_t s = w; s < segments.size(); s += workers)
          results[s] = decode_segment(stream, segments[s], map);
      } catch (const std::exception& e) {
        errors[w] = e.what();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& err : errors)
    if (!err.empty()) throw StreamError(err, 0);

  size_t total = 0;
  for (const auto& r : results) total += r.size();
  std::vector<TraceEvent> out;
  out.reserve(total);
  for (const auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

}  // namespace tirtaint
