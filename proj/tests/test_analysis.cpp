#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "tirtaint/analysis.hpp"
#include "tirtaint/plan_model.hpp"
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

struct Setup {
  Program p;
  Cfg cfg;
  TaintConfig config;

  Setup(const char* prog, const char* conf) : p(parse_program(prog)), cfg(build_cfg(p)) {
    config = TaintConfig::parse(conf);
    config.bind(p);
  }
};

bool wcc_together(const Vfg& v, const std::vector<VfgNode>& nodes) {
  std::set<uint32_t> ids;
  for (const auto& n : nodes) ids.insert(v.wcc[v.find(n)]);
  return ids.size() == 1;
}

VfgNode use_node(uint32_t fn, uint32_t idx, uint8_t reg) {
  return VfgNode{Label{fn, idx}, false, Register{reg}, false};
}

}  // namespace

TEST_CASE("toy vfg: one wcc holds the documented occurrences") {
  Setup s(kToyProgram, kToyConfig);
  Vfg vfg = build_vfg(s.p, 0, s.cfg);
  CHECK(wcc_together(vfg, {use_node(0, 1, 0), use_node(0, 3, 0), use_node(0, 5, 1),
                           use_node(0, 8, 1)}));
  // every memory use has an address edge out of its base register
  size_t addr_edges = 0;
  for (const auto& e : vfg.edges)
    if (e.kind == VfgEdgeKind::Address) addr_edges++;
  CHECK(addr_edges == 5);  // L3, L4, L5, L6(push), L8
}

TEST_CASE("vfg without memory operands has no address edges") {
  Setup s("f:\n  mov r1, r0\n  add r1, 4\n  halt\n", "");
  Vfg vfg = build_vfg(s.p, 0, s.cfg);
  for (const auto& e : vfg.edges) CHECK(e.kind == VfgEdgeKind::Value);
}

TEST_CASE("vfg def-use edges match a brute-force recomputation") {
  // straight-line function: def-use equals "last def wins" by hand
  Setup s("f:\n  mov r1, r0\n  add r1, 2\n  mov r2, r1\n  store [r2], r1\n  halt\n", "");
  Vfg vfg = build_vfg(s.p, 0, s.cfg);
  // r1@L2(def) -> r1@L3(use), r1@L2(def) -> r1@L4(use? via store value-use: store
  // creates no value node for the stored register; check the base instead)
  uint32_t d2 = vfg.find(VfgNode{Label{0, 2}, false, Register{1}, true});
  uint32_t u3 = vfg.find(VfgNode{Label{0, 3}, false, Register{1}, false});
  bool found = false;
  for (const auto& e : vfg.edges)
    if (e.kind == VfgEdgeKind::Value && e.from == d2 && e.to == u3) found = true;
  CHECK(found);
  // the L1 def must not reach L3 (killed by L2's redefinition)
  uint32_t d1 = vfg.find(VfgNode{Label{0, 1}, false, Register{1}, true});
  for (const auto& e : vfg.edges)
    CHECK(!(e.kind == VfgEdgeKind::Value && e.from == d1 && e.to == u3));
}

TEST_CASE("mvsa: identical constants become must-aliases") {
  Setup s("f:\n  mov r1, 8\n  mov r2, 8\n  halt\n", "");
  MvsaResult mv = run_mvsa(s.p, 0, s.cfg);
  REQUIRE(mv.alias_edges.size() >= 1);
  bool found = false;
  for (const auto& [from, to] : mv.alias_edges)
    if (from.site == Label{0, 1} && to.site == Label{0, 2}) found = true;
  CHECK(found);
}

TEST_CASE("mvsa: diamond merge of distinct constants is invalid") {
  const char* prog = R"(
f:
  cmp r0, 0
  jz L5
  mov r1, 4
  jmp L6
  mov r1, 5
  mov r2, r1
  halt
)";
  Setup s(prog, "");
  MvsaResult mv = run_mvsa(s.p, 0, s.cfg);
  CHECK(mv.known_in.count({Label{0, 6}, Register{1}}) == 0);
  // single-arm constants are known inside their arms
  CHECK(mv.known_out.at({Label{0, 3}, Register{1}}) == 4);
  CHECK(mv.known_out.at({Label{0, 5}, Register{1}}) == 5);
}

TEST_CASE("mvsa: constant stores feed constant loads") {
  Setup s("f:\n  mov r1, 100\n  store [r1], 7\n  load r2, [r1]\n  mov r3, r2\n  halt\n",
          "");
  MvsaResult mv = run_mvsa(s.p, 0, s.cfg);
  CHECK(mv.known_out.at({Label{0, 3}, Register{2}}) == 7);
}

TEST_CASE("mvsa soundness against concrete execution") {
  const char* prog = R"(
f:
  mov r1, 10
  mov r2, r1
  add r2, 5
  cmp r0, 3
  jlt L7
  xor r3, r3
  store [r2+1], r1
  load r4, [r2+1]
  halt
)";
  Setup s(prog, "");
  MvsaResult mv = run_mvsa(s.p, 0, s.cfg);
  std::map<std::pair<Label, Register>, uint64_t> facts(mv.known_in.begin(),
                                                       mv.known_in.end());
  for (uint64_t r0 : {0ull, 3ull, 9ull}) {
    InputImage in;
    in.regs[0] = r0;
    ExecOptions eo;
    std::vector<std::string> violations;
    eo.known_facts = &facts;
    eo.known_fact_violations = &violations;
    execute(s.p, in, TraceConfig{4096, 0, TraceMode::None}, eo);
    CHECK(violations.empty());
  }
}

TEST_CASE("identify_registers: toy plan keeps only the wcc root") {
  Setup s(kToyProgram, kToyConfig);
  Vfg vfg = build_vfg(s.p, 0, s.cfg);
  MvsaResult mv = run_mvsa(s.p, 0, s.cfg);
  enrich_vfg(vfg, mv);
  MayTaintInfo may = compute_may_taint(s.p, s.cfg, s.config);
  mark_relevant_memory(vfg, s.p, s.cfg, s.config, may);
  auto roots = identify_registers(vfg);
  REQUIRE(roots.size() == 1);
  CHECK(roots[0].site == Label{0, 1});
  CHECK(roots[0].reg == Register{0});
  CHECK_FALSE(roots[0].post);
}

TEST_CASE("identify_registers: no relevant memory means nothing traced") {
  Setup s("f:\n  mov r1, r0\n  add r1, 4\n  halt\n", "");
  Vfg vfg = build_vfg(s.p, 0, s.cfg);
  MayTaintInfo may = compute_may_taint(s.p, s.cfg, s.config);
  mark_relevant_memory(vfg, s.p, s.cfg, s.config, may);
  CHECK(identify_registers(vfg).empty());
}

TEST_CASE("taint-unchanged blocks") {
  const char* prog = R"(
f:
  cmp r0, 0
  jz L4
  mov r1, r0
  add r2, 2
  halt
)";
  Setup s(prog, "source f@L3 r0\n");
  // block {L1,L2}: cmp/jcc only -> unchanged; block {L3}: mov from a source
  // site -> changed; block {L4,L5}: add r2,2 keeps r2's status -> unchanged
  auto unchanged = compute_taint_unchanged_blocks(s.p, 0, s.cfg, s.config);
  const auto& blocks = s.cfg.per_fn[0].blocks;
  REQUIRE(blocks.size() == 3);
  std::set<uint32_t> u(unchanged.begin(), unchanged.end());
  CHECK(u.count(blocks[0].id) == 1);
  CHECK(u.count(blocks[1].id) == 0);
  CHECK(u.count(blocks[2].id) == 1);
}

TEST_CASE("taint-unchanged enumeration agrees with brute force") {
  // brute-force oracle: run the body block's taint transfer concretely over
  // all 2^k assignments of the touched cells. Sources sit in the first
  // block so the body registers carry unknown statuses.
  const char* bodies[] = {
      "mov r1, r0",
      "add r1, r1",
      "xor r1, r1",
      "mov r1, 5",
      "add r1, 7\n  and r2, r2",
      "mov r3, r3",
      "cmp r1, r2",
  };
  bool expect[] = {false, true, false, false, true, true, true};
  for (size_t pi = 0; pi < std::size(bodies); pi++) {
    std::string prog =
        "f:\n  taint_source r0\n  taint_source r1\n  taint_source r2\n"
        "  taint_source r3\n  jmp L6\n  " +
        std::string(bodies[pi]) + "\n  halt\n";
    Setup s(prog.c_str(), "");
    auto unchanged = compute_taint_unchanged_blocks(s.p, 0, s.cfg, s.config);
    const auto& blocks = s.cfg.per_fn[0].blocks;
    REQUIRE(blocks.size() == 2);
    bool got = false;
    for (uint32_t id : unchanged)
      if (id == blocks[1].id) got = true;
    INFO("program ", pi);
    CHECK(got == expect[pi]);
    // brute force over register statuses r0..r3 for the body block
    const Function& f = s.p.functions[0];
    bool brute = true;
    for (uint32_t bits = 0; bits < 16; bits++) {
      bool st[4];
      for (int r = 0; r < 4; r++) st[r] = bits & (1u << r);
      bool out[4];
      for (int r = 0; r < 4; r++) out[r] = st[r];
      for (uint32_t i = blocks[1].leader; i <= blocks[1].last; i++) {
        const Instruction& ins = f.at(i);
        switch (ins.op) {
          case Opcode::Mov:
            out[ins.dst->reg.index] = ins.src->is_reg() && out[ins.src->reg.index];
            break;
          case Opcode::Add:
          case Opcode::And:
            out[ins.dst->reg.index] =
                out[ins.dst->reg.index] ||
                (ins.src->is_reg() && out[ins.src->reg.index]);
            break;
          case Opcode::Xor:
            if (ins.src->is_reg() && ins.src->reg == ins.dst->reg)
              out[ins.dst->reg.index] = false;
            else
              out[ins.dst->reg.index] =
                  out[ins.dst->reg.index] ||
                  (ins.src->is_reg() && out[ins.src->reg.index]);
            break;
          default:
            break;
        }
      }
      for (int r = 0; r < 4; r++)
        if (out[r] != st[r]) brute = false;
    }
    CHECK(brute == got);
  }
}

TEST_CASE("select_target_blocks: single block selects itself") {
  Setup s("f:\n  mov r1, r0\n  halt\n", "source f@L1 r0\n");
  ReducedCfg r = build_reduced_cfg(s.p, 0, s.cfg, {});
  auto sel = select_target_blocks(r);
  REQUIRE(sel.size() == 1);
  CHECK(sel[0] == s.cfg.per_fn[0].blocks[0].id);
}

TEST_CASE("select_target_blocks: toy reduced cfg picks both branch targets") {
  Setup s(kToyProgram, kToyConfig);
  auto removed = compute_taint_unchanged_blocks(s.p, 0, s.cfg, s.config);
  ReducedCfg r = build_reduced_cfg(s.p, 0, s.cfg, removed);
  auto sel = select_target_blocks(r);
  const auto& blocks = s.cfg.per_fn[0].blocks;
  std::set<uint32_t> want{blocks[1].id, blocks[2].id};  // L3 and L6 blocks
  CHECK(std::set<uint32_t>(sel.begin(), sel.end()) == want);
}

TEST_CASE("eliminate_functions") {
  const char* prog = R"(
main:
  taint_source r0
  mov r1, r0
  call leaf
  call carrier
  taint_sink r1
  halt
leaf:
  add r4, 5
  xor r5, r5
  ret
carrier:
  mov r2, r1
  ret
)";
  Setup s(prog, "");
  auto skipped = eliminate_functions(s.p, s.cfg, s.config);
  CHECK(skipped == std::vector<std::string>{"leaf"});
}

TEST_CASE("skipped functions never change verdicts") {
  const char* prog = R"(
main:
  taint_source r0
  mov r1, r0
  call leaf
  taint_sink r1
  halt
leaf:
  add r4, 5
  ret
)";
  Setup s(prog, "");
  TaintReport rep = reference_dta(s.p, InputImage{}, s.config);
  REQUIRE(rep.sinks.size() == 1);
  CHECK(rep.sinks[0].tainted);
}

TEST_CASE("plan_trace_points: toy program gives the documented plan") {
  Setup s(kToyProgram, kToyConfig);
  TracePlan plan = plan_trace_points(s.p, s.config);
  REQUIRE(plan.registers.size() == 1);
  CHECK(plan.registers[0].site == Label{0, 1});
  CHECK(plan.registers[0].reg == Register{0});
  const auto& blocks = s.cfg.per_fn[0].blocks;
  std::set<uint32_t> want{blocks[1].id, blocks[2].id};
  CHECK(std::set<uint32_t>(plan.blocks.begin(), plan.blocks.end()) == want);
  CHECK(plan.skipped_functions.empty());
}

TEST_CASE("plan_trace_points: empty config yields an empty plan") {
  Program p = parse_program(kToyProgram);
  TaintConfig empty;
  TracePlan plan = plan_trace_points(p, empty);
  CHECK(plan.registers.empty());
  // no sources: every block is taint-unchanged, nothing to disambiguate
  CHECK(plan.blocks.empty());
}

TEST_CASE("conservative plan matches the baseline description") {
  Setup s(kToyProgram, kToyConfig);
  TracePlan plan = conservative_plan(s.p, s.config);
  std::set<std::pair<uint32_t, uint8_t>> regs;
  for (const auto& rp : plan.registers) regs.insert({rp.site.idx, rp.reg.index});
  std::set<std::pair<uint32_t, uint8_t>> want{{3, 0}, {5, 1}, {8, 1}};
  CHECK(regs == want);  // r2@L4 and r7@L6 pruned as taint-irrelevant
  const auto& blocks = s.cfg.per_fn[0].blocks;
  std::set<uint32_t> bwant{blocks[1].id, blocks[2].id};
  CHECK(std::set<uint32_t>(plan.blocks.begin(), plan.blocks.end()) == bwant);
}

TEST_CASE("naive plan traces every memory register") {
  Setup s(kToyProgram, kToyConfig);
  TracePlan plan = naive_plan(s.p, s.config);
  CHECK(plan.registers.size() == 5);  // L3, L4, L5, L6(push), L8
}

TEST_CASE("selective plan is never larger than the conservative plan") {
  Setup s(kToyProgram, kToyConfig);
  TracePlan sel = plan_trace_points(s.p, s.config);
  TracePlan con = conservative_plan(s.p, s.config);
  CHECK(sel.point_count() <= con.point_count());
}

TEST_CASE("plan json round trip") {
  Setup s(kToyProgram, kToyConfig);
  TracePlan plan = plan_trace_points(s.p, s.config);
  std::string j = plan.to_json(s.p);
  TracePlan back = TracePlan::from_json(j, s.p);
  CHECK(back.registers == plan.registers);
  CHECK(back.blocks == plan.blocks);
  CHECK(back.skipped_functions == plan.skipped_functions);
  CHECK(back.loops.size() == plan.loops.size());
  CHECK_THROWS_AS(TracePlan::from_json("{}", s.p), AnalysisError);
}

// ---- loop taxonomy (the four canonical shapes) ----

namespace {

// for i in 0..r2: if i > r1: a[i] = r4   (address and guard follow the IV)
const char* kLoopNonOnce = R"(
figa:
  mov r0, 0
  cmp r0, r2
  jge L11
  cmp r0, r1
  jle L9
  mov r6, r3
  add r6, r0
  store [r6], r4
  add r0, 1
  jmp L2
  halt
)";

// for i in 0..r2: if i > r1: { a[k] = r5; a[l] = r5 }  (fixed addresses)
const char* kLoopRegOnce = R"(
figb:
  mov r0, 0
  cmp r0, r2
  jge L10
  cmp r0, r1
  jle L8
  store [r3], r5
  store [r4], r5
  add r0, 1
  jmp L2
  halt
)";

// for i in 0..r2: a[i] = r5
const char* kLoopBlOnce = R"(
figc:
  mov r0, 0
  cmp r0, r2
  jge L9
  mov r6, r3
  add r6, r0
  store [r6], r5
  add r0, 1
  jmp L2
  halt
)";

// for i in 0..r2: a[j] = r5   (fixed address, loop branch only)
const char* kLoopFullOnce = R"(
figd:
  mov r0, 0
  cmp r0, r2
  jge L7
  store [r3], r5
  add r0, 1
  jmp L2
  halt
)";

LoopKind classify_first_loop(const char* prog, const char* conf) {
  Setup s(prog, conf);
  Vfg vfg = build_vfg(s.p, 0, s.cfg);
  MvsaResult mv = run_mvsa(s.p, 0, s.cfg);
  enrich_vfg(vfg, mv);
  MayTaintInfo may = compute_may_taint(s.p, s.cfg, s.config);
  mark_relevant_memory(vfg, s.p, s.cfg, s.config, may);
  auto loops = find_loops(s.p, 0, s.cfg);
  REQUIRE(loops.size() == 1);
  REQUIRE(loops[0].ivs == std::vector<Register>{Register{0}});
  return classify_loop(loops[0], vfg, s.p, 0, s.cfg, s.config, may);
}

}  // namespace

TEST_CASE("loop taxonomy matches the four canonical programs") {
  CHECK(classify_first_loop(kLoopNonOnce, "source figa@L1 r4\n") == LoopKind::NonOnce);
  CHECK(classify_first_loop(kLoopRegOnce, "source figb@L1 r5\n") == LoopKind::RegOnce);
  CHECK(classify_first_loop(kLoopBlOnce, "source figc@L1 r5\n") == LoopKind::BlOnce);
  CHECK(classify_first_loop(kLoopFullOnce, "source figd@L1 r5\n") == LoopKind::FullOnce);
}

TEST_CASE("full-once plan hoists the loop points") {
  Setup s(kLoopFullOnce, "source figd@L1 r5\n");
  TracePlan plan = plan_trace_points(s.p, s.config);
  bool has_full_once = false;
  for (const auto& d : plan.loops) {
    if (d.kind == LoopKind::FullOnce) {
      has_full_once = true;
      CHECK(d.hoist_blocks);
      CHECK(d.hoisted_regs.size() == 1);
      CHECK(d.hoisted_regs[0].reg == Register{3});
    }
  }
  CHECK(has_full_once);
}

TEST_CASE("irreducible control flow classifies conservatively") {
  // two-entry cycle: neither cycle block dominates the other
  const char* prog = R"(
f:
  cmp r0, 0
  jz L6
  mov r6, r3
  add r6, 1
  jmp L6
  store [r6], r5
  cmp r6, r2
  jlt L4
  halt
)";
  Setup s(prog, "source f@L1 r5\n");
  auto loops = find_loops(s.p, 0, s.cfg);
  // the retreating edge does not target a dominator, so no natural loop is
  // reported and nothing is hoisted
  CHECK(loops.empty());
  TracePlan plan = plan_trace_points(s.p, s.config);
  for (const auto& d : plan.loops) CHECK_FALSE(d.hoist_blocks);
}

TEST_CASE("plan model builds and validates for the toy plan") {
  Setup s(kToyProgram, kToyConfig);
  TracePlan plan = plan_trace_points(s.p, s.config);
  PlanModel model = build_plan_model(s.p, s.cfg, s.config, plan);
  CHECK(model.tokens.size() == 3);  // one record, two marks
  // corrupting the plan (dropping the traced register) must not validate
  // silently: the register disappears from the event alphabet, leaving the
  // toy decision resolvable but the value engine must later fail; dropping
  // a mark instead makes the branch ambiguous
  TracePlan broken = plan;
  broken.blocks.erase(broken.blocks.begin());  // drop the L3 mark
  CHECK_THROWS_AS(build_plan_model(s.p, s.cfg, s.config, broken), AnalysisError);
}
