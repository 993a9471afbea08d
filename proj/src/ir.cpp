#include "regguard/ir.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace regguard::ir {

std::string_view to_string(TypeClass t) {
  switch (t) {
    case TypeClass::pointer: return "ptr";
    case TypeClass::integral: return "int";
    case TypeClass::floating: return "float";
  }
  return "?";
}

std::string_view to_string(BinOp op) {
  switch (op) {
    case BinOp::add: return "add";
    case BinOp::sub: return "sub";
    case BinOp::mul: return "mul";
  }
  return "?";
}

std::string_view to_string(Rel rel) {
  switch (rel) {
    case Rel::eq: return "eq";
    case Rel::ne: return "ne";
    case Rel::lt: return "lt";
    case Rel::ge: return "ge";
  }
  return "?";
}

namespace {
template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
}  // namespace

bool Instruction::is_terminator() const {
  return std::holds_alternative<BranchCond>(form) || std::holds_alternative<Jump>(form) ||
         std::holds_alternative<Return>(form);
}

bool Instruction::is_call() const {
  return std::holds_alternative<CallDirect>(form) || std::holds_alternative<CallIndirect>(form);
}

std::optional<std::string> Instruction::def() const {
  return std::visit(
      overloaded{
          [](const AssignImm& i) -> std::optional<std::string> { return i.dst; },
          [](const AssignCopy& i) -> std::optional<std::string> { return i.dst; },
          [](const BinaryOp& i) -> std::optional<std::string> { return i.dst; },
          [](const Compare& i) -> std::optional<std::string> { return i.dst; },
          [](const Load& i) -> std::optional<std::string> { return i.dst; },
          [](const AddressOf& i) -> std::optional<std::string> { return i.dst; },
          [](const CallDirect& i) { return i.dst; },
          [](const CallIndirect& i) { return i.dst; },
          [](const ReadExternal& i) -> std::optional<std::string> { return i.dst; },
          [](const auto&) -> std::optional<std::string> { return std::nullopt; },
      },
      form);
}

std::vector<std::string> Instruction::value_uses() const {
  return std::visit(
      overloaded{
          [](const AssignCopy& i) { return std::vector<std::string>{i.src}; },
          [](const BinaryOp& i) { return std::vector<std::string>{i.a, i.b}; },
          [](const Compare& i) { return std::vector<std::string>{i.a, i.b}; },
          [](const BranchCond& i) { return std::vector<std::string>{i.cond}; },
          [](const Load& i) { return std::vector<std::string>{i.addr}; },
          [](const Store& i) { return std::vector<std::string>{i.addr, i.src}; },
          [](const CallDirect& i) { return i.args; },
          [](const CallIndirect& i) {
            std::vector<std::string> v{i.pointer};
            v.insert(v.end(), i.args.begin(), i.args.end());
            return v;
          },
          [](const Return& i) {
            return i.value ? std::vector<std::string>{*i.value} : std::vector<std::string>{};
          },
          [](const auto&) { return std::vector<std::string>{}; },
      },
      form);
}

std::vector<std::string> Instruction::successors() const {
  if (const auto* b = std::get_if<BranchCond>(&form)) return {b->then_label, b->else_label};
  if (const auto* j = std::get_if<Jump>(&form)) return {j->label};
  return {};
}

bool Function::is_leaf() const {
  for (const auto& b : blocks)
    for (const auto& i : b.instructions)
      if (i.is_call()) return false;
  return true;
}

const Variable* Function::find_variable(std::string_view n) const {
  for (const auto& v : params)
    if (v.name == n) return &v;
  for (const auto& v : locals)
    if (v.name == n) return &v;
  return nullptr;
}

std::size_t Function::block_index(std::string_view label) const {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].label == label) return i;
  return std::string::npos;
}

std::vector<Variable> Function::variables() const {
  std::vector<Variable> all = params;
  all.insert(all.end(), locals.begin(), locals.end());
  return all;
}

const Function* Program::find_function(std::string_view n) const {
  for (const auto& f : functions)
    if (f.name == n) return &f;
  return nullptr;
}

std::size_t Program::function_index(std::string_view n) const {
  for (std::size_t i = 0; i < functions.size(); ++i)
    if (functions[i].name == n) return i;
  return std::string::npos;
}

std::string default_entry(const Program& p) {
  if (p.find_function("main")) return "main";
  return p.functions.empty() ? std::string{} : p.functions.front().name;
}

ParseError::ParseError(std::string kind, std::string message, SourceLoc loc)
    : std::runtime_error("line " + std::to_string(loc.line) + ":" + std::to_string(loc.column) +
                         ": " + kind + ": " + message),
      loc_(loc),
      detail_(std::move(message)) {}

bool is_reserved_word(std::string_view w) {
  static constexpr std::array<std::string_view, 15> kReserved = {
      "func", "var", "br",   "jmp",  "store", "ret",   "add",   "sub",
      "mul",  "cmp", "load", "addr", "call",  "icall", "extern"};
  return std::find(kReserved.begin(), kReserved.end(), w) != kReserved.end();
}

namespace {

void check_function(const Program& p, const Function& f) {
  const SourceLoc none{};
  if (is_reserved_word(f.name)) throw SemanticError("reserved word used as function name '" + f.name + "'", none);
  if (f.blocks.empty()) throw SemanticError("function '" + f.name + "' has no blocks", none);

  std::unordered_map<std::string, const Variable*> vars;
  for (const auto& v : f.variables()) {
    if (is_reserved_word(v.name))
      throw SemanticError("reserved word used as variable name '" + v.name + "'", none);
    if (!vars.emplace(v.name, &v).second)
      throw SemanticError("duplicate variable '" + v.name + "' in function '" + f.name + "'", none);
  }
  for (const auto& v : f.params)
    if (v.is_buffer()) throw SemanticError("parameter '" + v.name + "' cannot be a buffer", none);
  // Re-point at the function's own storage (variables() returned copies).
  vars.clear();
  for (const auto& v : f.params) vars.emplace(v.name, &v);
  for (const auto& v : f.locals) vars.emplace(v.name, &v);

  std::unordered_set<std::string> labels;
  for (const auto& b : f.blocks)
    if (!labels.insert(b.label).second)
      throw SemanticError("duplicate label '" + b.label + "' in function '" + f.name + "'", none);

  auto need_var = [&](const std::string& name, SourceLoc loc) -> const Variable& {
    auto it = vars.find(name);
    if (it == vars.end()) throw SemanticError("undeclared variable '" + name + "'", loc);
    return *it->second;
  };
  auto need_scalar = [&](const std::string& name, SourceLoc loc) -> const Variable& {
    const Variable& v = need_var(name, loc);
    if (v.is_buffer())
      throw SemanticError("buffer '" + name + "' may only be used through addr", loc);
    return v;
  };
  auto need_label = [&](const std::string& label, SourceLoc loc) {
    if (!labels.count(label)) throw SemanticError("undefined label '" + label + "'", loc);
  };
  auto check_call = [&](const std::string& callee, const std::vector<std::string>& args, SourceLoc loc) {
    const Function* target = p.find_function(callee);
    if (!target) throw SemanticError("call to undefined function '" + callee + "'", loc);
    if (target->params.size() != args.size())
      throw SemanticError("arity mismatch calling '" + callee + "': expected " +
                              std::to_string(target->params.size()) + " arguments, got " +
                              std::to_string(args.size()),
                          loc);
  };

  for (const auto& b : f.blocks) {
    if (b.instructions.empty()) throw SemanticError("empty block '" + b.label + "'", none);
    for (std::size_t i = 0; i < b.instructions.size(); ++i) {
      const Instruction& ins = b.instructions[i];
      const bool last = i + 1 == b.instructions.size();
      if (ins.is_terminator() && !last)
        throw SemanticError("terminator is not the last instruction of block '" + b.label + "'", ins.loc);
      if (!ins.is_terminator() && last)
        throw SemanticError("block '" + b.label + "' is missing a terminator", ins.loc);

      if (const auto* a = std::get_if<AddressOf>(&ins.form)) {
        if (need_scalar(a->dst, ins.loc).type != TypeClass::pointer)
          throw SemanticError("addr destination '" + a->dst + "' must have pointer type", ins.loc);
        if (a->of_function) {
          if (!p.find_function(a->target))
            throw SemanticError("addr of undefined function '" + a->target + "'", ins.loc);
        } else {
          need_var(a->target, ins.loc);
        }
        continue;
      }
      if (auto d = ins.def()) need_scalar(*d, ins.loc);
      for (const auto& u : ins.value_uses()) need_scalar(u, ins.loc);
      for (const auto& s : ins.successors()) need_label(s, ins.loc);
      if (const auto* c = std::get_if<CallDirect>(&ins.form)) check_call(c->callee, c->args, ins.loc);
      if (const auto* c = std::get_if<CallIndirect>(&ins.form)) {
        if (need_scalar(c->pointer, ins.loc).type != TypeClass::pointer)
          throw SemanticError("icall target '" + c->pointer + "' must have pointer type", ins.loc);
      }
    }
  }
}

}  // namespace

void validate(const Program& p) {
  if (p.functions.empty()) throw SemanticError("program has no functions", {});
  std::set<std::string> names;
  for (const auto& f : p.functions)
    if (!names.insert(f.name).second) throw SemanticError("duplicate function '" + f.name + "'", {});
  if (!p.find_function(p.entry))
    throw SemanticError("entry function '" + p.entry + "' is not defined", {});
  for (const auto& f : p.functions) check_function(p, f);
}

}  // namespace regguard::ir
