#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tirtaint/analysis.hpp"
#include "tirtaint/decoder.hpp"
#include "tirtaint/rewriter.hpp"
#include "tirtaint/tracer.hpp"

using namespace tirtaint;

namespace {

const char* kToyProgram = R"(
main:
  mov r1, r0
  jnz L6
  load r2, [r0]
  store [r2], r3
  store [r1], r2
  push r3
  sub r1, 4
  load r0, [r1]
)";

const char* kToyConfig = "source main@L1 r0\ntaintmem 0x7c\nsink main@L8 r0\n";

InputImage toy_input() {
  InputImage in;
  in.regs[0] = 0x80;
  in.regs[7] = 0x200;
  in.mem[0x7c] = 0xdead;
  return in;
}

struct Rewritten {
  Program p;
  TaintConfig config;
  TracePlan plan;
  RewriteResult rw;

  Rewritten(const char* prog, const char* conf) : p(parse_program(prog)) {
    config = TaintConfig::parse(conf);
    config.bind(p);
    plan = plan_trace_points(p, config);
    rw = rewrite(p, plan);
  }
};

}  // namespace

TEST_CASE("rewrite inserts the documented records for the toy plan") {
  Rewritten r(kToyProgram, kToyConfig);
  // record r0 sits after L1 (mov does not redefine r0), block marks at the
  // entries of the L3 and L6 blocks
  std::string printed = print_program(r.rw.program);
  CHECK(printed.find("record r0") != std::string::npos);
  REQUIRE(r.rw.map.sites.size() == 3);
  const Function& f = r.rw.program.functions[0];
  REQUIRE(f.instrs.size() == 11);
  CHECK(f.at(1).op == Opcode::Mov);       // mov r1, r0
  CHECK(f.at(2).is_register_record());    // record r0 after the host
  CHECK(f.at(3).op == Opcode::Jcc);
  CHECK(f.at(3).target == 8);             // retargeted to the L6 mark
  CHECK(f.at(4).is_record());             // mark of the L3 block
  CHECK_FALSE(f.at(4).is_register_record());
  CHECK(f.at(8).is_record());             // mark of the L6 block
}

TEST_CASE("rewriting preserves architectural semantics") {
  Rewritten r(kToyProgram, kToyConfig);
  TraceConfig none{4096, 0, TraceMode::None};
  auto a = execute(r.p, toy_input(), none);
  auto b = execute(r.rw.program, toy_input(), none);
  CHECK(a.state.regs == b.state.regs);
  CHECK(a.state.mem == b.state.mem);
  CHECK_FALSE(b.trapped);
}

TEST_CASE("empty plan leaves the program unchanged") {
  Program p = parse_program(kToyProgram);
  TracePlan empty;
  RewriteResult rw = rewrite(p, empty);
  CHECK(print_program(rw.program) == print_program(p));
  CHECK(rw.map.sites.empty());
}

TEST_CASE("site ids are dense and bijective") {
  Rewritten r(kToyProgram, kToyConfig);
  std::set<uint32_t> seen;
  for (const auto& f : r.rw.program.functions)
    for (const auto& ins : f.instrs)
      if (ins.is_record()) seen.insert(ins.site);
  REQUIRE(seen.size() == r.rw.map.sites.size());
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == r.rw.map.sites.size() - 1);
}

TEST_CASE("consolidation keeps one record per planned block") {
  // the traced register lives inside a marked block: mark is omitted
  const char* prog = R"(
f:
  cmp r0, 0
  jz L5
  load r1, [r2]
  store [r1], r0
  halt
)";
  Program p = parse_program(prog);
  TaintConfig tc = TaintConfig::parse("source f@L1 r0\nsink f@L4 mem\n");
  tc.bind(p);
  TracePlan plan = plan_trace_points(p, tc);
  RewriteResult rw = rewrite(p, plan);
  Cfg cfg = build_cfg(p);
  uint32_t mid_block = cfg.per_fn[0].blocks[1].id;  // {L3, L4}
  bool mid_marked =
      std::find(plan.blocks.begin(), plan.blocks.end(), mid_block) != plan.blocks.end();
  bool has_reg_in_mid = false;
  for (const auto& rp : plan.registers)
    if (cfg.per_fn[0].block_at(rp.site.idx) == 1) has_reg_in_mid = true;
  if (mid_marked && has_reg_in_mid) {
    for (const auto& s : rw.map.sites)
      if (s.kind == TracePointInfo::Kind::BlockMark) CHECK(s.block != mid_block);
  }
  // exactly one record site lands in that block
  uint32_t records_in_mid = 0;
  for (const auto& s : rw.map.sites)
    if (s.block == mid_block) records_in_mid++;
  CHECK(records_in_mid >= 1);
}

TEST_CASE("rewrite errors on a plan that does not match the program") {
  Program p = parse_program("f: mov r1, r0\n  halt\n");
  TracePlan plan;
  plan.registers.push_back({Label{0, 99}, Register{0}, false});
  CHECK_THROWS_AS(rewrite(p, plan), RewriteError);
  TracePlan plan2;
  plan2.blocks.push_back(42);
  CHECK_THROWS_AS(rewrite(p, plan2), RewriteError);
}

TEST_CASE("trace point map json round trip") {
  Rewritten r(kToyProgram, kToyConfig);
  std::string j = r.rw.map.to_json(r.p);
  TracePointMap back = TracePointMap::from_json(j, r.p);
  REQUIRE(back.sites.size() == r.rw.map.sites.size());
  for (size_t i = 0; i < back.sites.size(); i++) {
    CHECK(back.sites[i].kind == r.rw.map.sites[i].kind);
    CHECK(back.sites[i].label == r.rw.map.sites[i].label);
    CHECK(back.sites[i].block == r.rw.map.sites[i].block);
  }
  CHECK(back.block_map == r.rw.map.block_map);
}

TEST_CASE("split_segments tiles the stream") {
  Rewritten r(kToyProgram, kToyConfig);
  auto res = execute(r.rw.program, toy_input(), TraceConfig{64, 0, TraceMode::Selective});
  auto segs = split_segments(res.stream);
  REQUIRE(!segs.empty());
  CHECK(segs.front().start == 0);
  CHECK(segs.back().end == res.stream.size());
  for (size_t i = 1; i < segs.size(); i++) CHECK(segs[i].start == segs[i - 1].end);
}

TEST_CASE("single psb stream yields one empty-body segment") {
  PacketStream s = {0x82, 0x02};
  auto segs = split_segments(s);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].start == 0);
  CHECK(segs[0].end == 2);
  TracePointMap map;
  CHECK(decode_segment(s, segs[0], map).empty());
}

TEST_CASE("stream not starting with psb is malformed") {
  PacketStream s = {0xB0, 0, 0, 0, 0};
  CHECK_THROWS_AS(split_segments(s), StreamError);
}

TEST_CASE("toy stream decodes to the documented events") {
  Rewritten r(kToyProgram, kToyConfig);
  auto res = execute(r.rw.program, toy_input(), TraceConfig{4096, 0, TraceMode::Selective});
  auto events = decode_sequential(res.stream, r.rw.map);
  REQUIRE(events.size() == 2);
  CHECK(events[0].kind == TraceEvent::Kind::RegisterValue);
  CHECK(events[0].value == 0x80);
  CHECK(r.rw.map.sites[events[0].site].label == Label{0, 1});
  CHECK(events[1].kind == TraceEvent::Kind::BlockHit);
  Cfg cfg = build_cfg(r.p);
  CHECK(events[1].block == cfg.per_fn[0].blocks[2].id);  // the L6 block
}

TEST_CASE("decode matches the executor shadow log") {
  Rewritten r(kToyProgram, kToyConfig);
  ExecOptions eo;
  eo.keep_shadow_log = true;
  auto res = execute(r.rw.program, toy_input(), TraceConfig{4096, 0, TraceMode::Selective}, eo);
  auto events = decode_sequential(res.stream, r.rw.map);
  std::vector<TraceEvent> want;
  for (const auto& e : res.shadow) {
    if (e.kind == ShadowEntry::Kind::RecordValue) {
      TraceEvent t;
      t.kind = TraceEvent::Kind::RegisterValue;
      t.site = e.site;
      t.value = e.value;
      want.push_back(t);
    } else if (e.kind == ShadowEntry::Kind::MarkHit) {
      TraceEvent t;
      t.kind = TraceEvent::Kind::BlockHit;
      t.site = e.site;
      t.block = r.rw.map.sites[e.site].block;
      want.push_back(t);
    }
  }
  CHECK(events == want);
}

TEST_CASE("segment decode equals whole-stream decode restricted to it") {
  Rewritten r(kToyProgram, kToyConfig);
  ParseOptions po;
  po.allow_records = true;
  // force several segments with a small PSB period
  auto res = execute(r.rw.program, toy_input(), TraceConfig{64, 0, TraceMode::Selective});
  auto whole = decode_sequential(res.stream, r.rw.map);
  std::vector<TraceEvent> stitched;
  for (const auto& seg : split_segments(res.stream)) {
    auto part = decode_segment(res.stream, seg, r.rw.map);
    stitched.insert(stitched.end(), part.begin(), part.end());
  }
  CHECK(whole == stitched);
}

TEST_CASE("parallel decode is identical for any worker count") {
  // bigger stream: loop with records
  const char* prog = R"(
f:
  mov r0, 0
  mov r1, 100
  load r2, [r1]
  store [r1], r2
  add r0, 1
  cmp r0, 200
  jlt L3
  halt
)";
  Program p = parse_program(prog);
  TaintConfig tc = TaintConfig::parse("taintmem 100\nsink f@L4 mem\n");
  tc.bind(p);
  TracePlan plan = plan_trace_points(p, tc);
  RewriteResult rw = rewrite(p, plan);
  auto res = execute(rw.program, InputImage{}, TraceConfig{128, 0, TraceMode::Selective});
  auto base = decode_parallel(res.stream, rw.map, 1);
  CHECK(!base.empty());
  for (unsigned w : {2u, 4u, 8u}) {
    auto got = decode_parallel(res.stream, rw.map, w);
    CHECK(got == base);
  }
}

TEST_CASE("malformed streams error with an offset") {
  TracePointMap map;
  TracePointInfo reg;
  reg.kind = TracePointInfo::Kind::RegisterValue;
  map.sites.push_back(reg);
  // FUP for a register record with no PTW behind it
  PacketStream s = {0x82, 0x02, 0xB0, 0x00, 0x00, 0x00, 0x00};
  auto segs = split_segments(s);
  CHECK_THROWS_AS(decode_segment(s, segs[0], map), StreamError);
  // PTW with no FUP
  PacketStream s2 = {0x82, 0x02, 0xC0, 1, 2, 3, 4, 5, 6, 7, 8};
  segs = split_segments(s2);
  CHECK_THROWS_AS(decode_segment(s2, segs[0], map), StreamError);
  // truncated TIP
  PacketStream s3 = {0x82, 0x02, 0xA0, 1};
  segs = split_segments(s3);
  CHECK_THROWS_AS(decode_segment(s3, segs[0], map), StreamError);
  // FUP naming a site beyond the map
  PacketStream s4 = {0x82, 0x02, 0xB0, 9, 0, 0, 0};
  segs = split_segments(s4);
  CHECK_THROWS_AS(decode_segment(s4, segs[0], map), StreamError);
}

TEST_CASE("unknown packet bytes are skipped") {
  TracePointMap map;
  TracePointInfo mark;
  mark.kind = TracePointInfo::Kind::BlockMark;
  mark.block = 7;
  map.sites.push_back(mark);
  PacketStream s = {0x82, 0x02, 0xEE, 0xB0, 0x00, 0x00, 0x00, 0x00};
  auto segs = split_segments(s);
  auto events = decode_segment(s, segs[0], map);
  REQUIRE(events.size() == 1);
  CHECK(events[0].block == 7);
}
