// Source IR: a small non-SSA imperative language of functions, typed scalar
// variables, stack buffers, and basic blocks.

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace regguard::ir {

enum class TypeClass { pointer, integral, floating };
enum class BinOp { add, sub, mul };
enum class Rel { eq, ne, lt, ge };

std::string_view to_string(TypeClass t);
std::string_view to_string(BinOp op);
std::string_view to_string(Rel rel);

struct SourceLoc {
  int line = 0;
  int column = 0;
};

struct Variable {
  std::string name;
  TypeClass type = TypeClass::integral;
  bool is_param = false;
  // Non-zero for stack buffers (`var data : int[32]`); buffers are reachable
  // only through `addr`.
  std::uint32_t buffer_bytes = 0;

  bool is_buffer() const { return buffer_bytes != 0; }
  friend bool operator==(const Variable&, const Variable&) = default;
};

struct AssignImm {
  std::string dst;
  std::int64_t value = 0;
  friend bool operator==(const AssignImm&, const AssignImm&) = default;
};
struct AssignCopy {
  std::string dst, src;
  friend bool operator==(const AssignCopy&, const AssignCopy&) = default;
};
struct BinaryOp {
  std::string dst;
  BinOp op = BinOp::add;
  std::string a, b;
  friend bool operator==(const BinaryOp&, const BinaryOp&) = default;
};
struct Compare {
  std::string dst;
  Rel rel = Rel::eq;
  std::string a, b;
  friend bool operator==(const Compare&, const Compare&) = default;
};
struct BranchCond {
  std::string cond, then_label, else_label;
  friend bool operator==(const BranchCond&, const BranchCond&) = default;
};
struct Jump {
  std::string label;
  friend bool operator==(const Jump&, const Jump&) = default;
};
struct Load {
  std::string dst, addr;
  std::int64_t offset = 0;
  friend bool operator==(const Load&, const Load&) = default;
};
struct Store {
  std::string addr;
  std::int64_t offset = 0;
  std::string src;
  friend bool operator==(const Store&, const Store&) = default;
};
struct AddressOf {
  std::string dst, target;
  bool of_function = false;  // resolved by the parser: locals shadow functions
  friend bool operator==(const AddressOf&, const AddressOf&) = default;
};
struct CallDirect {
  std::optional<std::string> dst;
  std::string callee;
  std::vector<std::string> args;
  friend bool operator==(const CallDirect&, const CallDirect&) = default;
};
struct CallIndirect {
  std::optional<std::string> dst;
  std::string pointer;
  std::vector<std::string> args;
  friend bool operator==(const CallIndirect&, const CallIndirect&) = default;
};
struct ReadExternal {
  std::string dst;
  friend bool operator==(const ReadExternal&, const ReadExternal&) = default;
};
struct Return {
  std::optional<std::string> value;
  friend bool operator==(const Return&, const Return&) = default;
};

using InstrForm = std::variant<AssignImm, AssignCopy, BinaryOp, Compare, BranchCond, Jump, Load,
                               Store, AddressOf, CallDirect, CallIndirect, ReadExternal, Return>;

inline constexpr std::size_t kInstrFormCount = std::variant_size_v<InstrForm>;

struct Instruction {
  InstrForm form;
  SourceLoc loc;

  // Structural equality ignores source locations.
  friend bool operator==(const Instruction& a, const Instruction& b) { return a.form == b.form; }

  bool is_terminator() const;
  bool is_call() const;
  /// Variable written by this instruction, if any.
  std::optional<std::string> def() const;
  /// Variables whose values are read, in operand order (duplicates kept).
  std::vector<std::string> value_uses() const;
  /// Branch targets of a terminator (empty for `ret`).
  std::vector<std::string> successors() const;
};

struct BasicBlock {
  std::string label;
  std::vector<Instruction> instructions;
  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

struct Function {
  std::string name;
  std::vector<Variable> params;
  std::vector<Variable> locals;
  std::vector<BasicBlock> blocks;

  bool is_leaf() const;
  const Variable* find_variable(std::string_view name) const;
  std::size_t block_index(std::string_view label) const;  // npos when absent
  /// Params followed by locals.
  std::vector<Variable> variables() const;

  friend bool operator==(const Function&, const Function&) = default;
};

struct Program {
  std::vector<Function> functions;
  std::string entry;

  const Function* find_function(std::string_view name) const;
  std::size_t function_index(std::string_view name) const;  // npos when absent

  friend bool operator==(const Program&, const Program&) = default;
};

/// Entry function picked when a program has no `entry` directive.
std::string default_entry(const Program& p);

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string kind, std::string message, SourceLoc loc);
  const SourceLoc& location() const { return loc_; }
  const std::string& detail() const { return detail_; }

 private:
  SourceLoc loc_;
  std::string detail_;
};

class SyntaxError : public ParseError {
 public:
  SyntaxError(std::string message, SourceLoc loc) : ParseError("syntax error", std::move(message), loc) {}
};

class SemanticError : public ParseError {
 public:
  SemanticError(std::string message, SourceLoc loc)
      : ParseError("semantic error", std::move(message), loc) {}
};

Program parse_program(std::string_view text);
std::string serialize_program(const Program& p);
/// Canonical single-line text of one instruction.
std::string format_instruction(const Instruction& ins);

/// Re-checks every program invariant; throws SemanticError on the first
/// violation. parse_program() calls this before returning.
void validate(const Program& p);

bool is_reserved_word(std::string_view word);

}  // namespace regguard::ir
