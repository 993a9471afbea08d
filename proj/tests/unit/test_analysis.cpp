#include <gtest/gtest.h>

#include <random>

#include "regguard/analysis.hpp"
#include "support.hpp"

using namespace regguard;
using namespace regguard::analysis;

namespace {

ir::Program parse(const std::string& s) { return ir::parse_program(s); }

const ir::Function& fn(const ir::Program& p, const char* name) { return *p.find_function(name); }

std::multiset<DefKind> def_kinds(const VarDefUse& d) {
  std::multiset<DefKind> out;
  for (const auto& x : d.defs) out.insert(x.kind);
  return out;
}

std::multiset<UseKind> use_kinds(const VarDefUse& d) {
  std::multiset<UseKind> out;
  for (const auto& x : d.uses) out.insert(x.kind);
  return out;
}

std::vector<LiveRange> ranges_of(const ir::Function& f) {
  const auto du = classify_defs_uses(f);
  return build_live_ranges(f, compute_liveness(f), du);
}

std::vector<const LiveRange*> by_var(const std::vector<LiveRange>& rs, const std::string& v) {
  std::vector<const LiveRange*> out;
  for (const auto& r : rs)
    if (r.variable == v) out.push_back(&r);
  return out;
}

}  // namespace

TEST(DefUse, Fig3Classification) {
  const auto p = parse(rgtest::read_file(rgtest::corpus_dir() + "/fig3.ir"));
  const auto du = classify_defs_uses(fn(p, "main"));
  EXPECT_EQ(def_kinds(du.at("is_valid")), (std::multiset<DefKind>{DefKind::immediate, DefKind::immediate}));
  EXPECT_EQ(use_kinds(du.at("is_valid")), (std::multiset<UseKind>{UseKind::comparison_operand}));
  EXPECT_TRUE(du.at("max_trial").has_def(DefKind::external));
  EXPECT_TRUE(du.at("max_trial").has_use(UseKind::comparison_operand));
  EXPECT_TRUE(du.at("func_ptr").has_use(UseKind::call_target));
  EXPECT_TRUE(du.at("func_ptr").has_def(DefKind::address_result));
  EXPECT_TRUE(du.at("drop_stats").has_use(UseKind::call_arg));
  EXPECT_TRUE(du.at("data").has_use(UseKind::address_taken));
  EXPECT_TRUE(du.at("c").has_use(UseKind::branch_cond));
}

TEST(DefUse, UnusedVariableHasNoUses) {
  const auto p = parse("func f() { var a : int var b : int e: a = 1 ret }");
  const auto du = classify_defs_uses(p.functions[0]);
  EXPECT_TRUE(du.at("a").uses.empty());
  EXPECT_TRUE(du.at("b").uses.empty());
  EXPECT_TRUE(du.at("b").defs.empty());
}

TEST(DefUse, ParamsGetAnEntryDef) {
  const auto p = parse("func f(x: int) { e: ret x }");
  const auto du = classify_defs_uses(p.functions[0]);
  ASSERT_EQ(du.at("x").defs.size(), 1u);
  EXPECT_EQ(du.at("x").defs[0].kind, DefKind::entry);
  EXPECT_EQ(du.at("x").defs[0].site, (ProgramPoint{0, 0}));
}

TEST(DefUse, EveryOccurrenceClassifiedOnce) {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 200; ++t) {
    const auto p = parse(rgtest::random_program(rng));
    const auto& f = fn(p, "f");
    const auto du = classify_defs_uses(f);
    std::map<std::string, std::size_t> defs, uses;
    for (std::uint32_t b = 0; b < f.blocks.size(); ++b)
      for (std::uint32_t i = 0; i < f.blocks[b].instructions.size(); ++i) {
        const auto& ins = f.blocks[b].instructions[i];
        if (auto d = ins.def()) ++defs[*d];
        for (const auto& u : ins.value_uses()) ++uses[u];
      }
    for (const auto& [name, d] : du.vars) {
      std::size_t nd = 0;
      for (const auto& x : d.defs) nd += x.kind != DefKind::entry;
      EXPECT_EQ(nd, defs[name]) << name;
      EXPECT_EQ(d.uses.size(), uses[name]) << name;
      for (const auto& x : d.uses) {
        ASSERT_LT(x.site.block, f.blocks.size());
        ASSERT_LT(x.site.index, f.blocks[x.site.block].instructions.size());
        if (x.kind == UseKind::call_target) EXPECT_EQ(f.find_variable(name)->type, ir::TypeClass::pointer);
      }
    }
  }
}

TEST(Liveness, StraightLineChain) {
  const auto p = parse("func f() { var a : int var b : int e: a = 1 b = a ret b }");
  const auto& f = p.functions[0];
  const auto live = compute_liveness(f);
  EXPECT_FALSE(live.live_before({0, 0}, "a"));
  EXPECT_TRUE(live.live_after({0, 0}, "a"));
  EXPECT_TRUE(live.live_before({0, 1}, "a"));
  EXPECT_FALSE(live.live_after({0, 1}, "a"));
  EXPECT_TRUE(live.live_after({0, 1}, "b"));
  EXPECT_FALSE(live.live_after({0, 2}, "b"));
}

TEST(Liveness, DiamondUsesOnOneArmOnly) {
  const auto p = parse(
      "func f(c: int) { var v : int var w : int\n"
      "e: v = 5 w = 1 br c left right\n"
      "left: w = add v v jmp join\n"
      "right: w = 2 jmp join\n"
      "join: ret w }");
  const auto& f = p.functions[0];
  const auto live = compute_liveness(f);
  EXPECT_TRUE(live.live_before({1, 0}, "v"));
  EXPECT_FALSE(live.live_before({2, 0}, "v"));
  EXPECT_FALSE(live.live_after({1, 0}, "v"));
  EXPECT_TRUE(live.live_after({0, 2}, "v"));
}

TEST(Liveness, LoopVariableLiveAcrossBackEdge) {
  const auto p = parse(
      "func f(n: int) { var i : int var one : int var c : int\n"
      "e: i = 0 one = 1 jmp h\n"
      "h: c = cmp lt i n br c b d\n"
      "b: i = add i one jmp h\n"
      "d: ret i }");
  const auto live = compute_liveness(p.functions[0]);
  EXPECT_TRUE(live.live_after({2, 1}, "i"));
  EXPECT_TRUE(live.live_after({2, 1}, "one"));
  EXPECT_TRUE(live.live_after({2, 1}, "n"));
  EXPECT_FALSE(live.live_after({3, 0}, "n"));
}

TEST(Liveness, MatchesPathEnumerationOnRandomFunctions) {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 300; ++t) {
    const auto src = rgtest::random_program(rng);
    const auto p = parse(src);
    const auto& f = fn(p, "f");
    const auto live = compute_liveness(f);
    for (std::uint32_t b = 0; b < f.blocks.size(); ++b)
      for (std::uint32_t i = 0; i < f.blocks[b].instructions.size(); ++i)
        for (const auto& v : live.tracked) {
          ASSERT_EQ(live.live_before({b, i}, v), rgtest::oracle_live_before(f, {b, i}, v))
              << v << " before " << b << ":" << i << "\n" << src;
          ASSERT_EQ(live.live_after({b, i}, v), rgtest::oracle_live_after(f, {b, i}, v))
              << v << " after " << b << ":" << i << "\n" << src;
        }
  }
}

TEST(Liveness, PinnedVariablesAreNotTracked) {
  const auto p = parse(rgtest::read_file(rgtest::corpus_dir() + "/fig3.ir"));
  const auto& f = fn(p, "main");
  EXPECT_EQ(pinned_variables(f), (std::set<std::string>{"data"}));
  const auto live = compute_liveness(f);
  EXPECT_EQ(live.id.count("data"), 0u);
  EXPECT_EQ(live.id.count("func_ptr"), 1u);
}

TEST(LiveRanges, RedefinitionSplitsIntoTwoRanges) {
  const auto p = parse("func f() { var a : int var b : int e: a = 1 b = a a = 2 b = add b a ret b }");
  const auto rs = ranges_of(p.functions[0]);
  EXPECT_EQ(by_var(rs, "a").size(), 2u);
}

TEST(LiveRanges, DeadDefOccupiesOnlyItsWriteSlot) {
  const auto p = parse("func f() { var a : int e: a = 1 ret }");
  const auto rs = ranges_of(p.functions[0]);
  const auto a = by_var(rs, "a");
  ASSERT_EQ(a.size(), 1u);
  ASSERT_EQ(a[0]->segments.size(), 1u);
  EXPECT_EQ(a[0]->segments[0], (Segment{1, 2}));
}

TEST(LiveRanges, Fig4GapsAreExcluded) {
  const auto p = parse(rgtest::read_file(rgtest::corpus_dir() + "/fig4.ir"));
  const auto rs = ranges_of(fn(p, "main"));
  const auto v1 = by_var(rs, "var1");
  const auto v2 = by_var(rs, "var2");
  ASSERT_EQ(v1.size(), 5u);
  // var1 = extern (L2) .. var1 = cmp (L3) .. call (L4) .. var2 = add (L5)
  EXPECT_EQ(v1[0]->segments, (std::vector<Segment>{{5, 7}}));
  EXPECT_EQ(v1[1]->segments, (std::vector<Segment>{{7, 9}}));
  // var2 is dead between its comparison use (L3) and its redefinition (L5).
  for (const auto* r : v2)
    for (const auto& s : r->segments) EXPECT_FALSE(s.begin < 11 && s.end > 7) << s.begin << "," << s.end;
}

TEST(LiveRanges, CoverageMatchesLiveness) {
  std::mt19937_64 rng(33);
  for (int t = 0; t < 300; ++t) {
    const auto src = rgtest::random_program(rng);
    const auto p = parse(src);
    const auto& f = fn(p, "f");
    const auto du = classify_defs_uses(f);
    const auto live = compute_liveness(f);
    const auto rs = build_live_ranges(f, live, du);
    const PointIndex idx(f);
    for (std::size_t i = 0; i < rs.size(); ++i) {
      EXPECT_EQ(rs[i].id, i);
      for (std::size_t s = 1; s < rs[i].segments.size(); ++s)
        EXPECT_LT(rs[i].segments[s - 1].end, rs[i].segments[s].begin);
    }
    for (const auto& v : live.tracked) {
      const auto mine = by_var(rs, v);
      for (std::uint32_t L = 0; L < idx.size(); ++L) {
        const auto pt = idx.point(L);
        const auto& ins = f.blocks[pt.block].instructions[pt.index];
        int rd = 0, wr = 0;
        for (const auto* r : mine) {
          rd += r->covers(PointIndex::read_slot(L));
          wr += r->covers(PointIndex::write_slot(L));
        }
        ASSERT_EQ(rd, live.live_before(pt, v) ? 1 : 0) << v << " L" << L << "\n" << src;
        ASSERT_EQ(wr, (live.live_after(pt, v) || ins.def() == v) ? 1 : 0) << v << " L" << L << "\n" << src;
      }
    }
  }
}

TEST(Interference, DisjointRangesHaveNoEdge) {
  const auto p = parse("func f() { var a : int var b : int e: a = 1 a = add a a b = 2 b = add b b ret b }");
  const auto rs = ranges_of(p.functions[0]);
  const auto g = build_interference(rs);
  EXPECT_TRUE(g.edges.empty());
}

TEST(Interference, MutuallyLiveRangesFormACompleteGraph) {
  for (int k = 2; k <= 6; ++k) {
    std::string src = "func f() {";
    for (int i = 0; i < k; ++i) src += " var x" + std::to_string(i) + " : int";
    src += " var s : int e:";
    for (int i = 0; i < k; ++i) src += " x" + std::to_string(i) + " = " + std::to_string(i);
    src += " s = 0";
    for (int i = 0; i < k; ++i) src += " s = add s x" + std::to_string(i);
    src += " ret s }";
    const auto p = parse(src);
    const auto rs = ranges_of(p.functions[0]);
    const auto g = build_interference(rs);
    std::vector<std::uint32_t> xs;
    for (const auto& r : rs)
      if (r.variable[0] == 'x') xs.push_back(r.id);
    ASSERT_EQ(xs.size(), static_cast<std::size_t>(k));
    for (auto a : xs)
      for (auto b : xs)
        if (a != b) EXPECT_TRUE(g.interferes(a, b));
  }
}

TEST(Interference, EdgesEqualBruteForceOverlap) {
  std::mt19937_64 rng(34);
  for (int t = 0; t < 500; ++t) {
    const auto p = parse(rgtest::random_program(rng));
    const auto& f = fn(p, "f");
    const auto rs = ranges_of(f);
    const auto g = build_interference(rs);
    const std::uint32_t slots = 2 * PointIndex(f).size();
    std::set<std::pair<std::uint32_t, std::uint32_t>> expect;
    for (std::size_t a = 0; a < rs.size(); ++a)
      for (std::size_t b = a + 1; b < rs.size(); ++b)
        for (std::uint32_t s = 0; s < slots; ++s)
          if (rs[a].covers(s) && rs[b].covers(s)) {
            expect.insert({rs[a].id, rs[b].id});
            break;
          }
    ASSERT_EQ(g.edges, expect);
    for (const auto& [a, b] : g.edges) EXPECT_NE(a, b);
    EXPECT_EQ(g.nodes.size(), rs.size());
  }
}

TEST(Interference, Fig4Topology) {
  const auto p = parse(rgtest::read_file(rgtest::corpus_dir() + "/fig4.ir"));
  const auto rs = ranges_of(fn(p, "main"));
  ASSERT_EQ(rs.size(), 9u);
  // var3 #0 [1,17); var2 #1 [3,7) #5 [11,15) #7 [15,17);
  // var1 #2 [5,7) #3 [7,9) #4 [9,11) #6 [13,15) #8 [17,19)
  std::set<std::pair<std::uint32_t, std::uint32_t>> expect = {{1, 2}, {5, 6}};
  for (std::uint32_t i = 1; i <= 7; ++i) expect.insert({0, i});
  EXPECT_EQ(build_interference(rs).edges, expect);
}

TEST(Analysis, Deterministic) {
  std::mt19937_64 rng(35);
  for (int t = 0; t < 50; ++t) {
    const auto p = parse(rgtest::random_program(rng));
    const auto& f = fn(p, "f");
    const auto a = ranges_of(f), b = ranges_of(f);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].variable, b[i].variable);
      EXPECT_EQ(a[i].segments, b[i].segments);
    }
    EXPECT_EQ(build_interference(a).edges, build_interference(b).edges);
  }
}

TEST(Analysis, DumpHasOneLinePerPoint) {
  const auto p = parse(rgtest::read_file(rgtest::corpus_dir() + "/fig3.ir"));
  const auto& f = fn(p, "main");
  const auto text = dump_liveness(f, compute_liveness(f));
  EXPECT_EQ(static_cast<std::uint32_t>(std::count(text.begin(), text.end(), '\n')), PointIndex(f).size());
  EXPECT_NE(text.find("live_in={"), std::string::npos);
}
