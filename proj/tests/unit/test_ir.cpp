#include <gtest/gtest.h>

#include <random>

#include "regguard/ir.hpp"
#include "support.hpp"

using namespace regguard::ir;

namespace {

template <class E>
std::string error_of(const std::string& text) {
  try {
    parse_program(text);
  } catch (const E& e) {
    return e.what();
  } catch (const std::exception& e) {
    return std::string("wrong exception: ") + e.what();
  }
  return "no error";
}

}  // namespace

TEST(Parser, MinimalProgram) {
  const auto p = parse_program("func f() { entry: ret }");
  ASSERT_EQ(p.functions.size(), 1u);
  const auto& f = p.functions[0];
  EXPECT_EQ(f.name, "f");
  EXPECT_TRUE(f.is_leaf());
  ASSERT_EQ(f.blocks.size(), 1u);
  EXPECT_EQ(f.blocks[0].label, "entry");
  EXPECT_EQ(p.entry, "f");
}

TEST(Parser, Fig3Transliteration) {
  const auto p = parse_program(rgtest::read_file(rgtest::corpus_dir() + "/fig3.ir"));
  const Function* main = p.find_function("main");
  ASSERT_NE(main, nullptr);
  EXPECT_FALSE(main->is_leaf());
  for (const char* n : {"func_ptr", "is_valid", "drop_stats", "max_trial"}) {
    const Variable* v = main->find_variable(n);
    ASSERT_NE(v, nullptr) << n;
    EXPECT_FALSE(v->is_param);
  }
  EXPECT_EQ(main->find_variable("func_ptr")->type, TypeClass::pointer);
  EXPECT_EQ(main->find_variable("data")->buffer_bytes, 32u);
  EXPECT_EQ(p.entry, "main");
}

TEST(Parser, KeepsSourceLocations) {
  const auto p = parse_program("func f() {\n  var a : int\nentry:\n  a = 1\n  ret a\n}\n");
  const auto& ins = p.functions[0].blocks[0].instructions;
  EXPECT_EQ(ins[0].loc.line, 4);
  EXPECT_EQ(ins[1].loc.line, 5);
  EXPECT_EQ(ins[0].loc.column, 3);
}

TEST(Parser, AllThirteenFormsAndTheirOperands) {
  const auto p = parse_program(rgtest::read_file(rgtest::corpus_dir() + "/forms.ir"));
  std::set<std::size_t> seen;
  for (const auto& f : p.functions)
    for (const auto& b : f.blocks)
      for (const auto& i : b.instructions) seen.insert(i.form.index());
  EXPECT_EQ(seen.size(), kInstrFormCount);
  EXPECT_EQ(kInstrFormCount, 13u);

  const auto q = parse_program(
      "func g(x: int) { e: ret x }\n"
      "func f(a: int, p: ptr) {\n  var b : int\n  var q : ptr\n"
      "e:\n  b = add a a\n  b = cmp lt a b\n  b = load p 16\n  store p -8 b\n  q = addr g\n"
      "  b = icall q(a)\n  call g(b)\n  br b e2 e2\ne2:\n  ret\n}\n");
  const auto& ins = q.functions[1].blocks[0].instructions;
  EXPECT_EQ(std::get<BinaryOp>(ins[0].form), (BinaryOp{"b", BinOp::add, "a", "a"}));
  EXPECT_EQ(std::get<Compare>(ins[1].form), (Compare{"b", Rel::lt, "a", "b"}));
  EXPECT_EQ(std::get<Load>(ins[2].form), (Load{"b", "p", 16}));
  EXPECT_EQ(std::get<Store>(ins[3].form), (Store{"p", -8, "b"}));
  EXPECT_TRUE(std::get<AddressOf>(ins[4].form).of_function);
  EXPECT_EQ(std::get<CallIndirect>(ins[5].form).pointer, "q");
  EXPECT_FALSE(std::get<CallDirect>(ins[6].form).dst.has_value());
  EXPECT_EQ(ins[5].value_uses(), (std::vector<std::string>{"q", "a"}));
  EXPECT_EQ(ins[3].value_uses(), (std::vector<std::string>{"p", "b"}));
  EXPECT_FALSE(ins[3].def().has_value());
}

TEST(Parser, UndefinedLabelIsNamedWithItsLine) {
  const auto msg = error_of<SemanticError>("func f() {\n  var c : int\nentry:\n  c = 1\n  br c missing_label entry\n}\n");
  EXPECT_NE(msg.find("missing_label"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
}

TEST(Parser, SemanticErrors) {
  EXPECT_NE(error_of<SemanticError>("func f() { e: ret x }").find("undeclared variable 'x'"), std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { var a : int var a : int e: ret }").find("duplicate"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { var a : int e: a = 1 }").find("missing a terminator"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func g(x: int) { e: ret x } func f() { e: call g() ret }").find("arity"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { var p : int e: p = addr f ret }").find("pointer"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { var p : int e: call p() ret }").find("undefined function"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { var p : int e: p = icall p() ret }").find("pointer type"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { e: ret } func f() { e: ret }").find("duplicate function"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { var b : int[16] e: b = 1 ret }").find("buffer"),
            std::string::npos);
  EXPECT_NE(error_of<SemanticError>("func f() { e: jmp e e: ret }").find("duplicate label"), std::string::npos);
}

TEST(Parser, SyntaxErrors) {
  for (const char* bad : {"func f( { e: ret }", "func f() { e: x = = 1 ret }", "func f() { var a : bool e: ret }",
                          "func f() {", "", "func f() { e: a = cmp gt a a ret }"}) {
    const auto msg = error_of<ParseError>(bad);
    EXPECT_NE(msg.find("error"), std::string::npos) << bad << " -> " << msg;
    EXPECT_EQ(msg.find("no error"), std::string::npos) << bad;
  }
}

TEST(Parser, TerminatorInsideBlockIsRejectedNotRepaired) {
  EXPECT_THROW(parse_program("func f() { var a : int e: ret a = 1 ret }"), ParseError);
}

TEST(Serializer, CorpusRoundTrips) {
  for (const auto& c : rgtest::load_corpus()) {
    const auto p = parse_program(c.text);
    const auto text = serialize_program(p);
    const auto q = parse_program(text);
    EXPECT_EQ(p, q) << c.name;
    EXPECT_EQ(serialize_program(q), text) << c.name;
  }
}

TEST(Serializer, RandomProgramsRoundTrip) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const auto src = rgtest::random_program(rng);
    const auto p = parse_program(src);
    EXPECT_EQ(parse_program(serialize_program(p)), p) << src;
  }
}

TEST(Ir, LeafIffNoCalls) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 200; ++i) {
    const auto p = parse_program(rgtest::random_program(rng));
    for (const auto& f : p.functions) {
      bool calls = false;
      for (const auto& b : f.blocks)
        for (const auto& ins : b.instructions)
          calls |= std::holds_alternative<CallDirect>(ins.form) || std::holds_alternative<CallIndirect>(ins.form);
      EXPECT_EQ(f.is_leaf(), !calls);
    }
  }
}

TEST(Ir, EntryDirectiveOverridesDefault) {
  const auto p = parse_program("func a() { e: ret } func b() { e: ret } entry b");
  EXPECT_EQ(p.entry, "b");
  EXPECT_EQ(parse_program(serialize_program(p)).entry, "b");
  EXPECT_THROW(parse_program("func a() { e: ret } entry zz"), SemanticError);
}
