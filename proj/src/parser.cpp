#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "regguard/ir.hpp"

namespace regguard::ir {
namespace {

struct Token {
  enum class Kind { ident, number, punct, eof } kind = Kind::eof;
  std::string text;
  std::int64_t number = 0;
  SourceLoc loc;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    for (;;) {
      skip_space_and_comments();
      Token t;
      t.loc = {line_, col_};
      if (pos_ >= src_.size()) {
        out.push_back(t);
        return out;
      }
      const char c = src_[pos_];
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        t.kind = Token::Kind::ident;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
          t.text += advance();
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '-' && pos_ + 1 < src_.size() &&
                  std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        t.kind = Token::Kind::number;
        t.text += advance();
        while (pos_ < src_.size() && std::isalnum(static_cast<unsigned char>(src_[pos_])))
          t.text += advance();
        t.number = parse_number(t);
      } else if (std::string_view("=:(){},[]").find(c) != std::string_view::npos) {
        t.kind = Token::Kind::punct;
        t.text += advance();
      } else {
        throw SyntaxError(std::string("unexpected character '") + c + "'", t.loc);
      }
      out.push_back(std::move(t));
    }
  }

 private:
  char advance() {
    const char c = src_[pos_++];
    if (c == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    return c;
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        return;
      }
    }
  }

  static std::int64_t parse_number(const Token& t) {
    std::string_view s = t.text;
    bool neg = false;
    if (!s.empty() && s.front() == '-') {
      neg = true;
      s.remove_prefix(1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      base = 16;
      s.remove_prefix(2);
    }
    std::uint64_t mag = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), mag, base);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw SyntaxError("malformed number '" + t.text + "'", t.loc);
    return neg ? static_cast<std::int64_t>(0 - mag) : static_cast<std::int64_t>(mag);
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  Program run() {
    Program p;
    std::optional<Token> entry_tok;
    std::set<std::string> fn_names;
    while (!at_eof()) {
      const Token& t = peek();
      if (is_ident("func")) {
        Function f = function();
        if (!fn_names.insert(f.name).second)
          throw SemanticError("duplicate function '" + f.name + "'", t.loc);
        p.functions.push_back(std::move(f));
      } else if (is_ident("entry")) {
        next();
        entry_tok = expect_ident("entry function name");
      } else {
        throw SyntaxError("expected 'func', found '" + describe(t) + "'", t.loc);
      }
    }
    if (p.functions.empty()) throw SemanticError("program has no functions", peek().loc);
    p.entry = entry_tok ? entry_tok->text : default_entry(p);
    if (!p.find_function(p.entry))
      throw SemanticError("entry function '" + p.entry + "' is not defined",
                          entry_tok ? entry_tok->loc : SourceLoc{});
    resolve_addr_targets(p);
    validate(p);
    return p;
  }

 private:
  // ---- token helpers -------------------------------------------------------
  const Token& peek(std::size_t ahead = 0) const {
    const std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[i];
  }
  Token next() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool at_eof() const { return peek().kind == Token::Kind::eof; }
  bool is_ident(std::string_view s, std::size_t ahead = 0) const {
    return peek(ahead).kind == Token::Kind::ident && peek(ahead).text == s;
  }
  bool is_punct(char c, std::size_t ahead = 0) const {
    return peek(ahead).kind == Token::Kind::punct && peek(ahead).text[0] == c;
  }
  static std::string describe(const Token& t) {
    return t.kind == Token::Kind::eof ? std::string("end of input") : t.text;
  }
  Token expect_ident(std::string_view what) {
    if (peek().kind != Token::Kind::ident)
      throw SyntaxError("expected " + std::string(what) + ", found '" + describe(peek()) + "'", peek().loc);
    return next();
  }
  Token expect_name(std::string_view what) {
    Token t = expect_ident(what);
    if (is_reserved_word(t.text))
      throw SyntaxError("reserved word '" + t.text + "' cannot be used as " + std::string(what), t.loc);
    return t;
  }
  std::int64_t expect_number(std::string_view what) {
    if (peek().kind != Token::Kind::number)
      throw SyntaxError("expected " + std::string(what) + ", found '" + describe(peek()) + "'", peek().loc);
    return next().number;
  }
  void expect_punct(char c) {
    if (!is_punct(c))
      throw SyntaxError(std::string("expected '") + c + "', found '" + describe(peek()) + "'", peek().loc);
    next();
  }

  // ---- grammar -------------------------------------------------------------
  TypeClass type_name() {
    const Token t = expect_ident("type");
    if (t.text == "ptr") return TypeClass::pointer;
    if (t.text == "int") return TypeClass::integral;
    if (t.text == "float") return TypeClass::floating;
    throw SyntaxError("unknown type '" + t.text + "'", t.loc);
  }

  Function function() {
    next();  // func
    Function f;
    f.name = expect_name("function name").text;
    std::set<std::string> var_names;
    auto declare = [&](const Token& t) {
      if (!var_names.insert(t.text).second)
        throw SemanticError("duplicate variable '" + t.text + "' in function '" + f.name + "'", t.loc);
    };

    expect_punct('(');
    if (!is_punct(')')) {
      for (;;) {
        const Token n = expect_name("parameter name");
        declare(n);
        expect_punct(':');
        f.params.push_back(Variable{n.text, type_name(), true, 0});
        if (!is_punct(',')) break;
        next();
      }
    }
    expect_punct(')');
    expect_punct('{');

    while (is_ident("var")) {
      next();
      const Token n = expect_name("variable name");
      declare(n);
      expect_punct(':');
      Variable v{n.text, type_name(), false, 0};
      if (is_punct('[')) {
        next();
        const Token size_tok = peek();
        const std::int64_t bytes = expect_number("buffer size");
        if (bytes <= 0 || bytes > (1 << 20))
          throw SemanticError("buffer size must be in 1..1048576 bytes", size_tok.loc);
        v.buffer_bytes = static_cast<std::uint32_t>(bytes);
        expect_punct(']');
      }
      f.locals.push_back(std::move(v));
    }

    std::set<std::string> labels;
    while (!is_punct('}')) {
      if (at_eof()) throw SyntaxError("unterminated function '" + f.name + "'", peek().loc);
      if (!(peek().kind == Token::Kind::ident && is_punct(':', 1)))
        throw SyntaxError("expected block label, found '" + describe(peek()) + "'", peek().loc);
      const Token label = expect_name("block label");
      if (!labels.insert(label.text).second)
        throw SemanticError("duplicate label '" + label.text + "' in function '" + f.name + "'", label.loc);
      next();  // ':'
      BasicBlock b{label.text, {}};
      while (!is_punct('}') && !at_eof() && !(peek().kind == Token::Kind::ident && is_punct(':', 1))) {
        b.instructions.push_back(instruction());
        if (b.instructions.back().is_terminator()) {
          // Anything other than a new label or the closing brace is dead code.
          if (!is_punct('}') && !(peek().kind == Token::Kind::ident && is_punct(':', 1)))
            throw SemanticError("instruction after terminator in block '" + b.label + "'", peek().loc);
        }
      }
      if (b.instructions.empty()) throw SemanticError("empty block '" + b.label + "'", label.loc);
      if (!b.instructions.back().is_terminator())
        throw SemanticError("block '" + b.label + "' is missing a terminator", b.instructions.back().loc);
      f.blocks.push_back(std::move(b));
    }
    next();  // '}'
    if (f.blocks.empty()) throw SemanticError("function '" + f.name + "' has no blocks", peek().loc);
    return f;
  }

  std::vector<std::string> call_args() {
    std::vector<std::string> args;
    expect_punct('(');
    if (!is_punct(')')) {
      for (;;) {
        args.push_back(expect_name("argument").text);
        if (!is_punct(',')) break;
        next();
      }
    }
    expect_punct(')');
    return args;
  }

  Instruction instruction() {
    const Token head = peek();
    Instruction ins;
    ins.loc = head.loc;
    if (head.kind != Token::Kind::ident)
      throw SyntaxError("expected instruction, found '" + describe(head) + "'", head.loc);

    if (head.text == "br") {
      next();
      BranchCond b;
      b.cond = expect_name("condition variable").text;
      b.then_label = expect_name("label").text;
      b.else_label = expect_name("label").text;
      ins.form = b;
    } else if (head.text == "jmp") {
      next();
      ins.form = Jump{expect_name("label").text};
    } else if (head.text == "store") {
      next();
      Store s;
      s.addr = expect_name("address variable").text;
      s.offset = expect_number("offset");
      s.src = expect_name("source variable").text;
      ins.form = s;
    } else if (head.text == "ret") {
      next();
      Return r;
      // The operand must sit on the same line and not start the next statement.
      if (peek().kind == Token::Kind::ident && peek().loc.line == head.loc.line && !is_punct(':', 1) &&
          !is_punct('=', 1))
        r.value = expect_name("return value").text;
      ins.form = r;
    } else if (head.text == "call") {
      next();
      CallDirect c;
      c.callee = expect_name("function name").text;
      c.args = call_args();
      ins.form = c;
    } else if (head.text == "icall") {
      next();
      CallIndirect c;
      c.pointer = expect_name("pointer variable").text;
      c.args = call_args();
      ins.form = c;
    } else {
      const Token dst = expect_name("destination variable");
      expect_punct('=');
      ins.form = rhs(dst.text);
    }
    return ins;
  }

  InstrForm rhs(const std::string& dst) {
    const Token t = peek();
    if (t.kind == Token::Kind::number) {
      next();
      return AssignImm{dst, t.number};
    }
    const Token op = expect_ident("expression");
    if (op.text == "add" || op.text == "sub" || op.text == "mul") {
      BinaryOp b;
      b.dst = dst;
      b.op = op.text == "add" ? BinOp::add : op.text == "sub" ? BinOp::sub : BinOp::mul;
      b.a = expect_name("operand").text;
      b.b = expect_name("operand").text;
      return b;
    }
    if (op.text == "cmp") {
      Compare c;
      c.dst = dst;
      const Token rel = expect_ident("relation");
      if (rel.text == "eq") c.rel = Rel::eq;
      else if (rel.text == "ne") c.rel = Rel::ne;
      else if (rel.text == "lt") c.rel = Rel::lt;
      else if (rel.text == "ge") c.rel = Rel::ge;
      else throw SyntaxError("unknown relation '" + rel.text + "'", rel.loc);
      c.a = expect_name("operand").text;
      c.b = expect_name("operand").text;
      return c;
    }
    if (op.text == "load") {
      Load l;
      l.dst = dst;
      l.addr = expect_name("address variable").text;
      l.offset = expect_number("offset");
      return l;
    }
    if (op.text == "addr") return AddressOf{dst, expect_name("address target").text, false};
    if (op.text == "call") {
      CallDirect c;
      c.dst = dst;
      c.callee = expect_name("function name").text;
      c.args = call_args();
      return c;
    }
    if (op.text == "icall") {
      CallIndirect c;
      c.dst = dst;
      c.pointer = expect_name("pointer variable").text;
      c.args = call_args();
      return c;
    }
    if (op.text == "extern") return ReadExternal{dst};
    if (is_reserved_word(op.text))
      throw SyntaxError("unexpected keyword '" + op.text + "' in expression", op.loc);
    return AssignCopy{dst, op.text};
  }

  // `addr NAME` names a local when one is declared, otherwise a function.
  static void resolve_addr_targets(Program& p) {
    for (auto& f : p.functions)
      for (auto& b : f.blocks)
        for (auto& i : b.instructions)
          if (auto* a = std::get_if<AddressOf>(&i.form))
            a->of_function = f.find_variable(a->target) == nullptr;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

Program parse_program(std::string_view text) {
  Lexer lexer(text);
  Parser parser(lexer.run());
  return parser.run();
}

namespace {

void write_instruction(std::ostringstream& os, const Instruction& ins) {
  auto args = [](const std::vector<std::string>& a) {
    std::string s = "(";
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? ", " : "") + a[i];
    return s + ")";
  };
  std::visit(
      [&](const auto& i) {
        using T = std::decay_t<decltype(i)>;
        if constexpr (std::is_same_v<T, AssignImm>) os << i.dst << " = " << i.value;
        else if constexpr (std::is_same_v<T, AssignCopy>) os << i.dst << " = " << i.src;
        else if constexpr (std::is_same_v<T, BinaryOp>) os << i.dst << " = " << to_string(i.op) << ' ' << i.a << ' ' << i.b;
        else if constexpr (std::is_same_v<T, Compare>) os << i.dst << " = cmp " << to_string(i.rel) << ' ' << i.a << ' ' << i.b;
        else if constexpr (std::is_same_v<T, BranchCond>) os << "br " << i.cond << ' ' << i.then_label << ' ' << i.else_label;
        else if constexpr (std::is_same_v<T, Jump>) os << "jmp " << i.label;
        else if constexpr (std::is_same_v<T, Load>) os << i.dst << " = load " << i.addr << ' ' << i.offset;
        else if constexpr (std::is_same_v<T, Store>) os << "store " << i.addr << ' ' << i.offset << ' ' << i.src;
        else if constexpr (std::is_same_v<T, AddressOf>) os << i.dst << " = addr " << i.target;
        else if constexpr (std::is_same_v<T, CallDirect>) os << (i.dst ? *i.dst + " = " : "") << "call " << i.callee << args(i.args);
        else if constexpr (std::is_same_v<T, CallIndirect>) os << (i.dst ? *i.dst + " = " : "") << "icall " << i.pointer << args(i.args);
        else if constexpr (std::is_same_v<T, ReadExternal>) os << i.dst << " = extern";
        else if constexpr (std::is_same_v<T, Return>) os << "ret" << (i.value ? " " + *i.value : "");
      },
      ins.form);
}

}  // namespace

std::string format_instruction(const Instruction& ins) {
  std::ostringstream os;
  write_instruction(os, ins);
  return os.str();
}

std::string serialize_program(const Program& p) {
  std::ostringstream os;
  if (p.entry != default_entry(p)) os << "entry " << p.entry << "\n\n";
  for (std::size_t fi = 0; fi < p.functions.size(); ++fi) {
    const Function& f = p.functions[fi];
    if (fi) os << '\n';
    os << "func " << f.name << '(';
    for (std::size_t i = 0; i < f.params.size(); ++i)
      os << (i ? ", " : "") << f.params[i].name << ": " << to_string(f.params[i].type);
    os << ") {\n";
    for (const auto& v : f.locals) {
      os << "  var " << v.name << " : " << to_string(v.type);
      if (v.is_buffer()) os << '[' << v.buffer_bytes << ']';
      os << '\n';
    }
    for (const auto& b : f.blocks) {
      os << b.label << ":\n";
      for (const auto& ins : b.instructions) {
        os << "  ";
        write_instruction(os, ins);
        os << '\n';
      }
    }
    os << "}\n";
  }
  return os.str();
}

}  // namespace regguard::ir
