#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tirtaint/taintgraph.hpp"
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

InputImage toy_input() {
  InputImage in;
  in.regs[0] = 0x80;
  in.regs[7] = 0x200;  // valid stack for the push at L6
  in.mem[0x7c] = 0xdead;
  return in;
}

const char* kToyConfig = R"(
source main@L1 r0
taintmem 0x7c
sink main@L8 r0
)";

}  // namespace

TEST_CASE("toy program executes the taken path") {
  Program p = parse_program(kToyProgram);
  ExecResult r = execute(p, toy_input(), TraceConfig{4096, 0, TraceMode::None});
  CHECK_FALSE(r.trapped);
  CHECK(r.state.regs[1] == 0x7c);
  CHECK(r.state.regs[0] == 0xdead);   // loaded from pre-set memory
  CHECK(r.state.regs[7] == 0x1ff);    // one push
  CHECK(r.steps == 5);                // L1, L2, L6, L7, L8
}

TEST_CASE("flags drive the untaken path after cmp") {
  // same tail, but a cmp forces zf=1 so jnz falls through
  Program p = parse_program(
      "main:\n  cmp r4, 0\n  jnz L6\n  mov r2, 1\n  mov r2, 2\n  mov r2, 3\n"
      "  mov r3, 9\n  sub r1, 4\n  halt\n");
  InputImage in;
  ExecResult r = execute(p, in, TraceConfig{4096, 0, TraceMode::None});
  CHECK(r.state.regs[2] == 3);  // fallthrough path ran
  CHECK(r.state.regs[3] == 9);
}

TEST_CASE("memory trap reports the faulting site") {
  Program p = parse_program("main:\n  load r0, [r1+100000000]\n  halt\n");
  ExecResult r = execute(p, InputImage{}, TraceConfig{});
  CHECK(r.trapped);
  CHECK(r.trap_site == Label{0, 1});
}

TEST_CASE("stack trap on bad stack pointer") {
  Program p = parse_program("main:\n  pop r0\n  halt\n");
  InputImage in;
  in.regs[7] = 1u << 30;
  ExecResult r = execute(p, in, TraceConfig{});
  CHECK(r.trapped);
}

TEST_CASE("exact packet bytes for one register record") {
  ParseOptions po;
  po.allow_records = true;
  Program p = parse_program("f:\n  record r0, 0\n  halt\n", po);
  InputImage in;
  in.regs[0] = 0x1122334455667788ull;
  ExecResult r = execute(p, in, TraceConfig{4096, 0, TraceMode::Selective});
  PacketStream want = {
      0x82, 0x02,                                     // PSB
      0x84, 0x00, 0x00, 0x00, 0x00,                   // PGE
      0xB0, 0x00, 0x00, 0x00, 0x00,                   // FUP site 0
      0xC0, 0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11,  // PTW
      0x85,                                           // PGD
  };
  CHECK(r.stream == want);
}

TEST_CASE("no trace points gives bare framing") {
  Program p = parse_program("f: mov r1, r0\n  halt\n");
  ExecResult r = execute(p, InputImage{}, TraceConfig{4096, 0, TraceMode::Selective});
  PacketStream want = {0x82, 0x02, 0x84, 0, 0, 0, 0, 0x85};
  CHECK(r.stream == want);
}

TEST_CASE("mode none emits nothing") {
  Program p = parse_program("f: mov r1, r0\n  halt\n");
  ExecResult r = execute(p, InputImage{}, TraceConfig{4096, 0, TraceMode::None});
  CHECK(r.stream.empty());
}

TEST_CASE("tnt packs up to six branch bits in naive mode") {
  // loop: 7 taken branch bits + final not-taken
  Program p = parse_program(
      "f:\n  mov r0, 0\n  add r0, 1\n  cmp r0, 7\n  jlt L2\n  halt\n");
  ExecResult r = execute(p, InputImage{}, TraceConfig{4096, 0, TraceMode::NaiveFull});
  // scan packets: expect one 6-bit TNT then one 1-bit TNT
  std::vector<std::pair<int, uint8_t>> tnts;
  for (size_t i = 0; i < r.stream.size();) {
    uint8_t b = r.stream[i];
    if (b == 0x82) i += 2;
    else if (b == 0x84) i += 5;
    else if (b == 0x85) i += 1;
    else if ((b & 0xF8) == 0x90) { tnts.push_back({b & 7, r.stream[i + 1]}); i += 2; }
    else if (b == 0xA0) i += 5;
    else if (b == 0xB0) i += 5;
    else if (b == 0xC0) i += 9;
    else FAIL("unknown byte");
  }
  REQUIRE(tnts.size() == 2);
  CHECK(tnts[0].first == 6);
  CHECK(tnts[0].second == 0x3f);  // six taken bits
  CHECK(tnts[1].first == 1);      // final not-taken bit flushed alone
  CHECK(tnts[1].second == 0x00);
}

TEST_CASE("selective mode emits no tnt or tip") {
  Program p = parse_program(
      "f:\n  mov r0, 0\n  add r0, 1\n  cmp r0, 7\n  jlt L2\n  halt\n");
  ExecResult r = execute(p, InputImage{}, TraceConfig{4096, 0, TraceMode::Selective});
  PacketStream want = {0x82, 0x02, 0x84, 0, 0, 0, 0, 0x85};
  CHECK(r.stream == want);
}

TEST_CASE("psb period bounds distance between sync points") {
  ParseOptions po;
  po.allow_records = true;
  Program p = parse_program(
      "f:\n  mov r0, 0\n  record r0, 0\n  add r0, 1\n  cmp r0, 64\n  jlt L2\n  halt\n", po);
  ExecResult r = execute(p, InputImage{}, TraceConfig{64, 0, TraceMode::Selective});
  size_t last_psb = 0;
  bool seen = false;
  for (size_t i = 0; i < r.stream.size();) {
    uint8_t b = r.stream[i];
    size_t len = b == 0x82 ? 2 : b == 0x84 ? 5 : b == 0x85 ? 1
                 : (b & 0xF8) == 0x90 ? 2 : b == 0xA0 ? 5 : b == 0xB0 ? 5 : 9;
    if (b == 0x82) {
      if (seen) CHECK(i - last_psb <= 64);
      last_psb = i;
      seen = true;
    }
    i += len;
  }
  CHECK(r.stream[0] == 0x82);
  CHECK(seen);
}

TEST_CASE("bounded buffer drops oldest packets and counts loss") {
  ParseOptions po;
  po.allow_records = true;
  Program p = parse_program(
      "f:\n  mov r0, 0\n  record r0, 0\n  add r0, 1\n  cmp r0, 1000\n  jlt L2\n  halt\n",
      po);
  ExecResult full = execute(p, InputImage{}, TraceConfig{4096, 0, TraceMode::Selective});
  ExecResult lossy = execute(p, InputImage{}, TraceConfig{4096, 256, TraceMode::Selective});
  CHECK(lossy.loss_count > 0);
  CHECK(lossy.stream.size() <= 256);
  CHECK(full.loss_count == 0);
  // loss monotonicity
  ExecResult mid = execute(p, InputImage{}, TraceConfig{4096, 1024, TraceMode::Selective});
  CHECK(mid.loss_count <= lossy.loss_count);
  CHECK(mid.loss_count > 0);
}

TEST_CASE("determinism and trace transparency") {
  Program p = parse_program(kToyProgram);
  auto a = execute(p, toy_input(), TraceConfig{4096, 0, TraceMode::NaiveFull});
  auto b = execute(p, toy_input(), TraceConfig{4096, 0, TraceMode::NaiveFull});
  CHECK(a.stream == b.stream);
  auto none = execute(p, toy_input(), TraceConfig{4096, 0, TraceMode::None});
  auto sel = execute(p, toy_input(), TraceConfig{4096, 0, TraceMode::Selective});
  CHECK(a.state.regs == none.state.regs);
  CHECK(sel.state.regs == none.state.regs);
  CHECK(a.state.mem == none.state.mem);
}

TEST_CASE("oracle: toy scenario taints the sink") {
  Program p = parse_program(kToyProgram);
  TaintConfig cfg = TaintConfig::parse(kToyConfig);
  TaintReport rep = reference_dta(p, toy_input(), cfg);
  REQUIRE(rep.sinks.size() == 1);
  CHECK(rep.sinks[0].site == Label{0, 8});
  CHECK(rep.sinks[0].tainted);
}

TEST_CASE("oracle: no sources means clean sinks") {
  Program p = parse_program(kToyProgram);
  TaintConfig cfg = TaintConfig::parse("sink main@L8 r0\n");
  TaintReport rep = reference_dta(p, toy_input(), cfg);
  REQUIRE(rep.sinks.size() == 1);
  CHECK_FALSE(rep.sinks[0].tainted);
}

TEST_CASE("oracle: untainted memory keeps sink clean on taken path") {
  Program p = parse_program(kToyProgram);
  TaintConfig cfg = TaintConfig::parse("source main@L1 r0\nsink main@L8 r0\n");
  TaintReport rep = reference_dta(p, toy_input(), cfg);
  REQUIRE(rep.sinks.size() == 1);
  CHECK_FALSE(rep.sinks[0].tainted);  // 0x7c not pre-tainted here
}

TEST_CASE("oracle: xor self and immediate loads sanitize") {
  Program p = parse_program(
      "f:\n  taint_source r0\n  mov r1, r0\n  xor r1, r1\n  taint_sink r1\n"
      "  mov r2, r0\n  mov r2, 5\n  taint_sink r2\n  taint_sink r0\n  halt\n");
  TaintReport rep = reference_dta(p, InputImage{}, TaintConfig{});
  REQUIRE(rep.sinks.size() == 3);
  CHECK_FALSE(rep.sinks[0].tainted);  // xor r1, r1
  CHECK_FALSE(rep.sinks[1].tainted);  // mov r2, 5
  CHECK(rep.sinks[2].tainted);        // r0 still tainted
}

TEST_CASE("oracle: weak memory updates keep words tainted on clean overwrite") {
  Program p = parse_program(
      "f:\n  taint_source r0\n  store [r2+16], r0\n  store [r2+16], r1\n"
      "  load r3, [r2+16]\n  taint_sink r3\n  store [r2+16], 0\n"
      "  load r4, [r2+16]\n  taint_sink r4\n  halt\n");
  TaintReport rep = reference_dta(p, InputImage{}, TaintConfig{});
  REQUIRE(rep.sinks.size() == 2);
  CHECK(rep.sinks[0].tainted);        // register overwrite does not clean the word
  CHECK_FALSE(rep.sinks[1].tainted);  // immediate store sanitizes
}

TEST_CASE("oracle: binary ops or taint statuses") {
  Program p = parse_program(
      "f:\n  taint_source r0\n  add r1, r0\n  taint_sink r1\n  and r2, 5\n"
      "  taint_sink r2\n  halt\n");
  TaintReport rep = reference_dta(p, InputImage{}, TaintConfig{});
  CHECK(rep.sinks[0].tainted);
  CHECK_FALSE(rep.sinks[1].tainted);
}

TEST_CASE("oracle: sink occurrences are counted per visit") {
  Program p = parse_program(
      "f:\n  mov r0, 0\n  taint_sink r1\n  add r0, 1\n  cmp r0, 3\n  jlt L2\n  halt\n");
  TaintReport rep = reference_dta(p, InputImage{}, TaintConfig{});
  REQUIRE(rep.sinks.size() == 3);
  CHECK(rep.sinks[2].occurrence == 3);
}

TEST_CASE("oracle: register summaries replace callee taint effects") {
  const char* prog =
      "main:\n  taint_source r1\n  call helper\n  taint_sink r3\n  halt\n"
      "helper:\n  mov r3, r1\n  ret\n";
  Program p = parse_program(prog);
  // without summary: r3 := r1 taints the sink
  TaintReport a = reference_dta(p, InputImage{}, TaintConfig{});
  CHECK(a.sinks[0].tainted);
  // sanitize summary overrides the body
  TaintConfig cfg = TaintConfig::parse("summary helper sanitize r3\n");
  TaintReport b = reference_dta(p, InputImage{}, cfg);
  CHECK_FALSE(b.sinks[0].tainted);
  // copy summary from a clean register
  TaintConfig cfg2 = TaintConfig::parse("summary helper copy r3 r2\n");
  TaintReport c = reference_dta(p, InputImage{}, cfg2);
  CHECK_FALSE(c.sinks[0].tainted);
  // copy summary from the tainted register
  TaintConfig cfg3 = TaintConfig::parse("summary helper copy r3 r1\n");
  TaintReport d = reference_dta(p, InputImage{}, cfg3);
  CHECK(d.sinks[0].tainted);
}

TEST_CASE("oracle: memory region summary copies word taint") {
  // r0 = dst, r1 = src, r2 = len; helper body copies nothing itself
  const char* prog =
      "main:\n  mov r0, 64\n  mov r1, 32\n  mov r2, 4\n  store [r1+1], r5\n"
      "  call blit\n  load r6, [r0+1]\n  taint_sink r6\n  halt\n"
      "blit:\n  ret\n";
  Program p = parse_program(prog);
  TaintConfig cfg = TaintConfig::parse(
      "source main@L4 r5\nsummary blit copy mem mem\n");
  TaintReport rep = reference_dta(p, InputImage{}, cfg);
  REQUIRE(rep.sinks.size() == 1);
  CHECK(rep.sinks[0].tainted);
}

TEST_CASE("oracle: implicit control taint behind config switch") {
  const char* prog =
      "main:\n  taint_source r0\n  cmp r0, 5\n  jz L5\n  mov r1, 1\n"
      "  taint_sink r1\n  halt\n";
  Program p = parse_program(prog);
  TaintReport off = reference_dta(p, InputImage{}, TaintConfig{});
  CHECK_FALSE(off.sinks[0].tainted);
  TaintConfig cfg = TaintConfig::parse("implicit on\n");
  TaintReport on = reference_dta(p, InputImage{}, cfg);
  CHECK(on.sinks[0].tainted);  // branch on tainted flags taints the def
}

TEST_CASE("shadow log records blocks, branches, and record values") {
  ParseOptions po;
  po.allow_records = true;
  Program p = parse_program(
      "f:\n  mov r0, 3\n  record r0, 0\n  record 1\n  cmp r0, 3\n  jz L7\n"
      "  halt\n  halt\n", po);
  ExecOptions eo;
  eo.keep_shadow_log = true;
  ExecResult r = execute(p, InputImage{}, TraceConfig{4096, 0, TraceMode::Selective}, eo);
  bool saw_value = false, saw_mark = false, saw_branch = false, saw_block = false;
  for (const auto& e : r.shadow) {
    if (e.kind == ShadowEntry::Kind::RecordValue && e.value == 3 && e.site == 0)
      saw_value = true;
    if (e.kind == ShadowEntry::Kind::MarkHit && e.site == 1) saw_mark = true;
    if (e.kind == ShadowEntry::Kind::BranchBit && e.taken) saw_branch = true;
    if (e.kind == ShadowEntry::Kind::BlockEnter) saw_block = true;
  }
  CHECK(saw_value);
  CHECK(saw_mark);
  CHECK(saw_branch);
  CHECK(saw_block);
}

TEST_CASE("input image round trip") {
  InputImage in;
  in.regs[0] = 128;
  in.regs[7] = 512;
  in.mem[124] = 57005;
  InputImage back = InputImage::parse(in.print());
  CHECK(back.regs == in.regs);
  CHECK(back.mem == in.mem);
}
