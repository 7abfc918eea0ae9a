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

bool has_edge(const TaintGraph& g, const TaintNode& from, const TaintNode& to,
              EdgeLabel label, uint32_t guard = 0) {
  uint32_t fi = g.node_index(from);
  uint32_t ti = g.node_index(to);
  if (fi == UINT32_MAX || ti == UINT32_MAX) return false;
  for (const auto& e : g.edges)
    if (e.from == fi && e.to == ti && e.label == label &&
        (label != EdgeLabel::Block || e.guard_block == guard))
      return true;
  return false;
}

TaintNode reg_node(uint32_t idx, uint8_t r, bool def) {
  TaintNode n;
  n.site = Label{0, idx};
  n.reg = Register{r};
  n.is_def = def;
  return n;
}

TaintNode mem_node(uint32_t idx, uint8_t base, bool def) {
  TaintNode n = reg_node(idx, base, def);
  n.is_mem = true;
  return n;
}

}  // namespace

TEST_CASE("toy taint graph carries the documented edges") {
  Program p = parse_program(kToyProgram);
  Cfg cfg = build_cfg(p);
  TaintConfig tc = TaintConfig::parse("source main@L1 r0\nsink main@L8 r0\n");
  tc.bind(p);
  TaintGraph g = build_taint_graph(p, 0, cfg, tc);

  // r0@L1 -a-> r1@L1
  CHECK(has_edge(g, reg_node(1, 0, false), reg_node(1, 1, true), EdgeLabel::Assign));
  // use r1@L7 -o-> def r1@L7
  CHECK(has_edge(g, reg_node(7, 1, false), reg_node(7, 1, true), EdgeLabel::Or));
  // r1@L8 -d-> [r1]@L8
  CHECK(has_edge(g, reg_node(8, 1, false), mem_node(8, 1, false), EdgeLabel::Deref));
  // def r1@L1 -bl(L6 block)-> use r1@L7
  uint32_t l6_block = cfg.per_fn[0].blocks[cfg.per_fn[0].block_at(6)].id;
  CHECK(has_edge(g, reg_node(1, 1, true), reg_node(7, 1, false), EdgeLabel::Block,
                 l6_block));
  // source and sink marks land on the configured occurrences
  uint32_t src = g.node_index(reg_node(1, 0, false));
  REQUIRE(src != UINT32_MAX);
  CHECK(g.nodes[src].source_mark);
  uint32_t snk = g.node_index(reg_node(8, 0, true));
  REQUIRE(snk != UINT32_MAX);
  CHECK(g.nodes[snk].sink_mark);
}

TEST_CASE("single halt function has an empty graph") {
  Program p = parse_program("f: halt\n");
  Cfg cfg = build_cfg(p);
  TaintGraph g = build_taint_graph(p, 0, cfg, TaintConfig{});
  CHECK(g.edges.empty());
}

TEST_CASE("sanitize edges for xor self and immediate loads") {
  Program p = parse_program("f:\n  xor r1, r1\n  mov r2, 5\n  store [r3], 0\n  halt\n");
  Cfg cfg = build_cfg(p);
  TaintGraph g = build_taint_graph(p, 0, cfg, TaintConfig{});
  CHECK(has_edge(g, reg_node(1, 1, false), reg_node(1, 1, true), EdgeLabel::Sanitize));
  CHECK(has_edge(g, reg_node(2, 2, false), reg_node(2, 2, true), EdgeLabel::Sanitize));
  CHECK(has_edge(g, mem_node(3, 3, false), mem_node(3, 3, true), EdgeLabel::Sanitize));
}

TEST_CASE("call edges guard callee entry") {
  Program p = parse_program(
      "main:\n  mov r0, 1\n  call helper\n  halt\n"
      "helper:\n  add r0, 2\n  ret\n");
  Cfg cfg = build_cfg(p);
  TaintGraph g = build_taint_graph(p, 0, cfg, TaintConfig{});
  uint32_t callee_entry = cfg.per_fn[1].blocks[0].id;
  TaintNode from = reg_node(2, 0, false);
  TaintNode to;
  to.site = Label{1, 1};
  to.reg = Register{0};
  to.is_def = false;
  CHECK(has_edge(g, from, to, EdgeLabel::Block, callee_entry));
}

TEST_CASE("def-use edges within a block are plain assignments") {
  Program p = parse_program("f:\n  mov r1, 7\n  add r2, r1\n  halt\n");
  Cfg cfg = build_cfg(p);
  TaintGraph g = build_taint_graph(p, 0, cfg, TaintConfig{});
  CHECK(has_edge(g, reg_node(1, 1, true), reg_node(2, 1, false), EdgeLabel::Assign));
}

TEST_CASE("loop-carried def-use edges are block guarded") {
  Program p = parse_program(
      "f:\n  mov r0, 0\n  add r0, 1\n  cmp r0, 3\n  jlt L2\n  halt\n");
  Cfg cfg = build_cfg(p);
  TaintGraph g = build_taint_graph(p, 0, cfg, TaintConfig{});
  uint32_t loop_block = cfg.per_fn[0].blocks[cfg.per_fn[0].block_at(2)].id;
  // add@L2's def reaches its own use around the back edge
  CHECK(has_edge(g, reg_node(2, 0, true), reg_node(2, 0, false), EdgeLabel::Block,
                 loop_block));
}

TEST_CASE("config parse and bind errors") {
  Program p = parse_program(kToyProgram);
  CHECK_THROWS_AS(TaintConfig::parse("source main r0\n"), ConfigError);
  CHECK_THROWS_AS(TaintConfig::parse("source main@L1 r9\n"), ConfigError);
  CHECK_THROWS_AS(TaintConfig::parse("summary f copy r1\n"), ConfigError);      // arity
  CHECK_THROWS_AS(TaintConfig::parse("summary f sanitize r1 r2\n"), ConfigError);
  CHECK_THROWS_AS(TaintConfig::parse("summary f blend r1 r2\n"), ConfigError);
  CHECK_THROWS_AS(TaintConfig::parse("summary f copy mem r1\n"), ConfigError);
  CHECK_THROWS_AS(TaintConfig::parse("nonsense 1\n"), ConfigError);
  TaintConfig miss = TaintConfig::parse("source nowhere@L1 r0\n");
  CHECK_THROWS_AS(miss.bind(p), ConfigError);
  TaintConfig oob = TaintConfig::parse("source main@L99 r0\n");
  CHECK_THROWS_AS(oob.bind(p), ConfigError);
  TaintConfig nomem = TaintConfig::parse("source main@L1 mem\n");
  CHECK_THROWS_AS(nomem.bind(p), ConfigError);  // L1 has no memory operand
}

TEST_CASE("pseudo-ops merge into the bound config") {
  Program p = parse_program("f:\n  taint_source r2\n  taint_sink [r3+8]\n  halt\n");
  TaintConfig tc;
  tc.bind(p);
  REQUIRE(tc.sources.size() == 1);
  CHECK(tc.sources[0].site == Label{0, 1});
  CHECK(tc.sources[0].reg == Register{2});
  REQUIRE(tc.sinks.size() == 1);
  CHECK(tc.sinks[0].is_mem);
}

TEST_CASE("config print round trip") {
  Program p = parse_program(kToyProgram);
  TaintConfig tc = TaintConfig::parse(
      "source main@L1 r0\ntaintmem 124\nsink main@L8 r0\n"
      "summary memfill sanitize mem\nsummary pass copy r1 r2\n");
  tc.bind(p);
  TaintConfig back = TaintConfig::parse(tc.print(p));
  back.bind(p);
  CHECK(back.sources == tc.sources);
  CHECK(back.sinks == tc.sinks);
  CHECK(back.pretainted_mem == tc.pretainted_mem);
  CHECK(back.summaries.size() == tc.summaries.size());
}

TEST_CASE("graph dump lists one edge per line") {
  Program p = parse_program("f:\n  mov r1, r0\n  halt\n");
  Cfg cfg = build_cfg(p);
  TaintGraph g = build_taint_graph(p, 0, cfg, TaintConfig{});
  std::string d = g.dump(p);
  CHECK(d == "r0@L1:use -a-> r1@L1:def\n");
}
