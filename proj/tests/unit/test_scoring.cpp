#include <gtest/gtest.h>

#include <random>

#include "regguard/pipeline.hpp"
#include "regguard/scoring.hpp"
#include "support.hpp"

using namespace regguard;
using namespace regguard::scoring;

namespace {

std::map<std::string, std::uint32_t> scores_of(const ir::Function& f) {
  std::map<std::string, std::uint32_t> out;
  for (const auto& [n, s] : score_function(f, analysis::classify_defs_uses(f))) out[n] = s.value;
  return out;
}

std::vector<std::string> ranked_variables(const ir::Function& f) {
  const auto du = analysis::classify_defs_uses(f);
  const auto ranges = analysis::build_live_ranges(f, analysis::compute_liveness(f), du);
  const auto order = rank_candidates(ranges, score_function(f, du), du);
  std::vector<std::string> out;
  for (auto id : order)
    if (std::find(out.begin(), out.end(), ranges[id].variable) == out.end()) out.push_back(ranges[id].variable);
  return out;
}

std::size_t pos(const std::vector<std::string>& v, const std::string& x) {
  return static_cast<std::size_t>(std::find(v.begin(), v.end(), x) - v.begin());
}

}  // namespace

TEST(Scoring, Fig3GoldenValues) {
  const auto p = ir::parse_program(rgtest::read_file(rgtest::corpus_dir() + "/fig3.ir"));
  const auto s = scores_of(*p.find_function("main"));
  EXPECT_EQ(s.at("func_ptr"), 6u);
  EXPECT_EQ(s.at("is_valid"), 4u);
  EXPECT_EQ(s.at("drop_stats"), 3u);
  EXPECT_EQ(s.at("max_trial"), 2u);
  EXPECT_EQ(s.at("buf"), 5u);  // data pointer, no branch use
  EXPECT_EQ(s.count("data"), 0u);  // pinned buffer, not a candidate
}

TEST(Scoring, Fig3RankOrder) {
  const auto p = ir::parse_program(rgtest::read_file(rgtest::corpus_dir() + "/fig3.ir"));
  const auto r = ranked_variables(*p.find_function("main"));
  EXPECT_LT(pos(r, "func_ptr"), pos(r, "is_valid"));
  EXPECT_LT(pos(r, "is_valid"), pos(r, "drop_stats"));
  EXPECT_LT(pos(r, "drop_stats"), pos(r, "max_trial"));
  // pointers ahead of programmer-defined integrals ahead of pure condition results
  EXPECT_LT(pos(r, "buf"), pos(r, "is_valid"));
  EXPECT_LT(pos(r, "is_valid"), pos(r, "c"));
  EXPECT_EQ(r.front(), "func_ptr");
}

TEST(Scoring, BaseCases) {
  const auto p = ir::parse_program(
      "func g(x: int) { e: ret x }\n"
      "func f(q: ptr) { var fl : float var e1 : int var dp : ptr var bp : ptr var k : int var c : int\n"
      "e: fl = 1 e1 = extern dp = addr g bp = load q 0 k = 3 c = cmp eq e1 k br bp x x\n"
      "x: ret c }");
  const auto s = scores_of(*p.find_function("f"));
  EXPECT_EQ(s.at("fl"), 1u);   // float with an immediate def still only base
  EXPECT_EQ(s.at("e1"), 2u);   // external def, comparison use
  EXPECT_EQ(s.at("dp"), 5u);   // pointer without branch use
  EXPECT_EQ(s.at("bp"), 6u);   // pointer used as branch condition
  EXPECT_EQ(s.at("k"), 4u);
  EXPECT_EQ(s.at("c"), 1u);
  EXPECT_EQ(s.count("q"), 0u);  // params are not scored
}

TEST(Scoring, PointerBonusesDoNotStack) {
  const auto p = ir::parse_program(
      "func g() { e: ret } func f() { var p : ptr var c : int\n"
      "e: p = addr g c = cmp eq p p br p x x\nx: icall p() ret c }");
  EXPECT_EQ(scores_of(*p.find_function("f")).at("p"), 6u);
}

TEST(Scoring, TieBreakByUseCountThenName) {
  const auto p = ir::parse_program(
      "func f() { var b : int var a : int var s : int\n"
      "e: a = extern b = extern s = add a b s = add s b s = add s b ret s }");
  const auto r = ranked_variables(p.functions[0]);
  EXPECT_LT(pos(r, "b"), pos(r, "a"));
  const auto q = ir::parse_program("func f() { var b : int var a : int e: a = extern b = extern ret }");
  const auto r2 = ranked_variables(q.functions[0]);
  EXPECT_LT(pos(r2, "a"), pos(r2, "b"));
}

TEST(Scoring, RankMatchesSortOracle) {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 300; ++t) {
    const auto p = ir::parse_program(rgtest::random_program(rng));
    const auto& f = *p.find_function("f");
    const auto du = analysis::classify_defs_uses(f);
    const auto ranges = analysis::build_live_ranges(f, analysis::compute_liveness(f), du);
    const auto sc = score_function(f, du);
    std::vector<std::uint32_t> expect;
    for (const auto& r : ranges)
      if (sc.count(r.variable)) expect.push_back(r.id);
    std::sort(expect.begin(), expect.end(), [&](auto a, auto b) {
      const auto& ra = ranges[a];
      const auto& rb = ranges[b];
      return std::make_tuple(-static_cast<long>(sc.at(ra.variable).value), -static_cast<long>(ra.use_count),
                             ra.variable, a) <
             std::make_tuple(-static_cast<long>(sc.at(rb.variable).value), -static_cast<long>(rb.use_count),
                             rb.variable, b);
    });
    ASSERT_EQ(rank_candidates(ranges, sc, du), expect);

    // Scaling every score by a positive constant leaves the order unchanged.
    auto scaled = sc;
    for (auto& [n, s] : scaled) s.value *= 7;
    EXPECT_EQ(rank_candidates(ranges, scaled, du), expect);
  }
}

TEST(Scoring, InvariantUnderInstructionPermutation) {
  std::mt19937_64 rng(42);
  for (int t = 0; t < 200; ++t) {
    auto p = ir::parse_program(rgtest::random_program(rng));
    auto& f = p.functions[1];
    const auto before = scores_of(f);
    for (auto& b : f.blocks) std::shuffle(b.instructions.begin(), b.instructions.end() - 1, rng);
    std::shuffle(f.blocks.begin() + 1, f.blocks.end(), rng);
    EXPECT_EQ(scores_of(f), before);
  }
}

TEST(Scoring, MonotoneUnderQualifyingAdditions) {
  std::mt19937_64 rng(43);
  for (int t = 0; t < 200; ++t) {
    auto p = ir::parse_program(rgtest::random_program(rng));
    auto& f = p.functions[1];
    const auto before = scores_of(f);
    if (before.empty()) continue;
    auto it = before.begin();
    std::advance(it, rng() % before.size());
    const std::string v = it->first;
    auto& body = f.blocks[0].instructions;
    const std::vector<ir::Instruction> extra = {
        {ir::AssignImm{v, 3}, {}},
        {ir::Compare{v, ir::Rel::eq, v, v}, {}},
    };
    body.insert(body.begin(), extra[rng() % 2]);
    const auto after = scores_of(f);
    EXPECT_GE(after.at(v), before.at(v)) << v;
  }
}

TEST(Scoring, UniformAcrossRanges) {
  for (const auto& c : rgtest::load_corpus()) {
    const auto comp = pipeline::compile_source(c.text, pipeline::preset("poc"));
    for (const auto& f : comp.functions) {
      for (const auto& r : f.ranges) {
        auto it = f.alloc.score_of.find(r.id);
        if (it == f.alloc.score_of.end()) continue;
        EXPECT_EQ(it->second, f.scores.at(r.variable)) << c.name << " " << f.name << " " << r.variable;
        EXPECT_GE(it->second.value, 1u);
        EXPECT_LE(it->second.value, 6u);
      }
    }
  }
}

TEST(Scoring, DumpListsVariablesInRankOrder) {
  const auto p = ir::parse_program(rgtest::read_file(rgtest::corpus_dir() + "/fig3.ir"));
  const auto& f = *p.find_function("main");
  const auto du = analysis::classify_defs_uses(f);
  const auto ranges = analysis::build_live_ranges(f, analysis::compute_liveness(f), du);
  const auto text = dump_scores(ranges, score_function(f, du), du);
  EXPECT_EQ(text.rfind("func_ptr 6\n", 0), 0u) << text;
  EXPECT_NE(text.find("is_valid 4\n"), std::string::npos);
  EXPECT_NE(text.find("drop_stats 3\n"), std::string::npos);
  EXPECT_NE(text.find("max_trial 2\n"), std::string::npos);
}
