#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tirtaint/isa.hpp"

using namespace tirtaint;

namespace {

// Reconstruction of the running two-path example used throughout the test
// suite: r0 is copied to r1, a branch selects between a three-instruction
// memory path and the push/sub/load tail, and the final load reads [r1]
// at r0-4. The jcc reads the initial flag state (zf=0), so the default
// run takes the branch to L6.
const char* kToyProgram = R"(
main:
  mov r1, r0        # L1
  jnz L6            # L2
  load r2, [r0]     # L3
  store [r2], r3    # L4
  store [r1], r2    # L5
  push r3           # L6
  sub r1, 4         # L7
  load r0, [r1]     # L8
)";

}  // namespace

TEST_CASE("parse minimal program") {
  Program p = parse_program("f: mov r1, r0\n  halt\n");
  REQUIRE(p.functions.size() == 1);
  CHECK(p.functions[0].name == "f");
  CHECK(p.functions[0].instrs.size() == 2);
  CHECK(p.functions[0].at(1).op == Opcode::Mov);
  CHECK(p.functions[0].at(2).op == Opcode::Halt);
}

TEST_CASE("parse toy program") {
  Program p = parse_program(kToyProgram);
  REQUIRE(p.functions.size() == 1);
  const Function& f = p.functions[0];
  REQUIRE(f.instrs.size() == 8);
  CHECK(f.at(2).op == Opcode::Jcc);
  CHECK(f.at(2).target == 6);
  CHECK(f.at(7).op == Opcode::Sub);
  CHECK(f.at(7).dst->reg == Register{1});
  CHECK(f.at(7).src->value == 4);
  CHECK(f.at(8).op == Opcode::Load);
  CHECK(f.at(8).dst->reg == Register{0});
  CHECK(f.at(8).src->reg == Register{1});
}

TEST_CASE("parse errors") {
  CHECK_THROWS_AS(parse_program("f: mov r9, r0\n"), ParseError);
  CHECK_THROWS_AS(parse_program("f: jmp missing_label\n"), ParseError);
  CHECK_THROWS_AS(parse_program("f: jmp L4\n"), ParseError);  // out of range
  CHECK_THROWS_AS(parse_program("f: bogus r1\n"), ParseError);
  CHECK_THROWS_AS(parse_program("f: halt\nf: halt\n"), ParseError);  // duplicate
  CHECK_THROWS_AS(parse_program("f: call nothere\n"), ParseError);
  CHECK_THROWS_AS(parse_program("f: record r1, 0\n"), ParseError);  // source program
  CHECK_THROWS_AS(parse_program("mov r1, r0\n"), ParseError);  // before header
  CHECK_THROWS_AS(parse_program(""), ParseError);
}

TEST_CASE("records allowed only when requested") {
  ParseOptions opts;
  opts.allow_records = true;
  Program p = parse_program("f: record r1, 0\n  record 1\n  halt\n", opts);
  CHECK(p.functions[0].at(1).is_register_record());
  CHECK(p.functions[0].at(1).site == 0);
  CHECK_FALSE(p.functions[0].at(2).is_register_record());
  CHECK(p.functions[0].at(2).is_record());
}

TEST_CASE("cfg straight line") {
  Program p = parse_program("f: mov r1, r0\n  add r1, 2\n  halt\n");
  auto blocks = build_cfg(p.functions[0]);
  REQUIRE(blocks.size() == 1);
  CHECK(blocks[0].leader == 1);
  CHECK(blocks[0].last == 3);
  CHECK(blocks[0].succs.empty());
}

TEST_CASE("cfg toy program") {
  Program p = parse_program(kToyProgram);
  Cfg cfg = build_cfg(p);
  const auto& blocks = cfg.per_fn[0].blocks;
  REQUIRE(blocks.size() == 3);
  // jcc block has two successors: the L3 block and the L6 block
  CHECK(blocks[0].leader == 1);
  CHECK(blocks[0].last == 2);
  REQUIRE(blocks[0].succs.size() == 2);
  const BasicBlock& taken = cfg.block(blocks[0].succs[0]);
  const BasicBlock& fall = cfg.block(blocks[0].succs[1]);
  CHECK(taken.leader == 6);
  CHECK(fall.leader == 3);
  // fallthrough path rejoins at L6
  REQUIRE(fall.succs.size() == 1);
  CHECK(cfg.block(fall.succs[0]).leader == 6);
  CHECK(taken.succs.empty());
}

TEST_CASE("cfg diamond") {
  // hand-enumerated leaders: 1 (entry), 3 (taken), 5 (after jmp), 6 (target)
  const char* text = R"(
f:
  cmp r0, 0       # L1
  jz L5           # L2
  mov r1, 1       # L3
  jmp L6          # L4
  mov r1, 2       # L5
  halt            # L6
)";
  Program p = parse_program(text);
  auto blocks = build_cfg(p.functions[0]);
  REQUIRE(blocks.size() == 4);
  size_t edges = 0;
  for (const auto& b : blocks) edges += b.succs.size();
  CHECK(edges == 4);
}

TEST_CASE("round trip print and reparse") {
  const char* samples[] = {
      kToyProgram,
      "f:\n  cmp r0, 0\n  jz L5\n  mov r1, 1\n  jmp L6\n  mov r1, 2\n  halt\n",
      "a:\n  call b\n  push 7\n  pop r3\n  taint_source r0\n  taint_sink [r3+4]\n  halt\nb:\n  xor r2, r2\n  ret\n",
  };
  for (const char* s : samples) {
    Program p1 = parse_program(s);
    std::string printed = print_program(p1);
    Program p2 = parse_program(printed);
    CHECK(print_program(p2) == printed);
    REQUIRE(p1.functions.size() == p2.functions.size());
    for (size_t i = 0; i < p1.functions.size(); i++) {
      const auto& f1 = p1.functions[i];
      const auto& f2 = p2.functions[i];
      REQUIRE(f1.instrs.size() == f2.instrs.size());
      for (size_t j = 0; j < f1.instrs.size(); j++) {
        CHECK(f1.instrs[j].op == f2.instrs[j].op);
        CHECK(f1.instrs[j].target == f2.instrs[j].target);
      }
    }
  }
}

TEST_CASE("cfg edge count equals terminator out degree") {
  Program p = parse_program(kToyProgram);
  Cfg cfg = build_cfg(p);
  size_t edges = 0, expect = 0;
  for (const auto& fc : cfg.per_fn) {
    for (const auto& b : fc.blocks) {
      edges += b.succs.size();
      const Instruction& t = p.functions[b.fn].at(b.last);
      bool last_in_fn = b.last == p.functions[b.fn].size();
      switch (t.op) {
        case Opcode::Jmp: expect += 1; break;
        case Opcode::Jcc: expect += last_in_fn ? 1 : 2; break;
        case Opcode::Ret:
        case Opcode::Halt: break;
        default: expect += last_in_fn ? 0 : 1; break;
      }
    }
  }
  CHECK(edges == expect);
}
