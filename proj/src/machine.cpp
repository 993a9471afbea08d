#include "regguard/machine.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace regguard::machine {

using regalloc::reg_name;

std::string_view to_string(Op op) {
  switch (op) {
    case Op::mov_imm: return "mov_imm";
    case Op::mov_reg: return "mov_reg";
    case Op::alu: return "alu";
    case Op::cmp: return "cmp";
    case Op::br: return "br";
    case Op::jmp: return "jmp";
    case Op::load: return "load";
    case Op::store: return "store";
    case Op::add_imm: return "add_imm";
    case Op::call: return "call";
    case Op::icall: return "icall";
    case Op::ret: return "ret";
    case Op::read_ext: return "read_ext";
    case Op::keygen: return "keygen";
    case Op::halt: return "halt";
    case Op::trap: return "trap";
    case Op::mac_init: return "mac_init";
    case Op::mac_compress: return "mac_compress";
    case Op::mac_finalize: return "mac_finalize";
    case Op::mac_check: return "mac_check";
  }
  return "?";
}

bool is_mac(Op op) {
  return op == Op::mac_init || op == Op::mac_compress || op == Op::mac_finalize || op == Op::mac_check;
}

std::string_view to_string(Slot s) {
  switch (s) {
    case Slot::none: return "none";
    case Slot::tag: return "tag";
    case Slot::ret: return "ret";
    case Slot::bp: return "bp";
    case Slot::var_reg: return "var";
    case Slot::arg: return "arg";
    case Slot::callsite_tag: return "callsite_tag";
  }
  return "?";
}

bool RangeInfo::covers(std::uint32_t s) const {
  return std::any_of(segments.begin(), segments.end(),
                     [s](const analysis::Segment& seg) { return seg.begin <= s && s < seg.end; });
}

const FunctionSpan* MachineProgram::function_at(std::uint32_t pc) const {
  for (const auto& f : functions)
    if (pc >= f.start && pc < f.end) return &f;
  return nullptr;
}

const FunctionSpan* MachineProgram::find(std::string_view name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

std::uint64_t function_id(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string mem(Reg base, std::int64_t off) {
  std::string s = "[" + reg_name(base);
  if (off > 0) s += "+" + std::to_string(off);
  if (off < 0) s += std::to_string(off);
  return s + "]";
}

std::string target_text(std::int32_t t) { return t < 0 ? "?" : hex(code_address(static_cast<std::uint32_t>(t))); }

}  // namespace

std::string format_instr(const MachineInstr& in) {
  std::string s;
  switch (in.op) {
    case Op::mov_imm:
      s = "mov " + reg_name(in.rd) + ", " + (in.symbol.empty() ? std::to_string(in.imm) : "&" + in.symbol);
      break;
    case Op::mov_reg: s = "mov " + reg_name(in.rd) + ", " + reg_name(in.ra); break;
    case Op::alu:
      s = std::string(ir::to_string(in.alu_op)) + " " + reg_name(in.rd) + ", " + reg_name(in.ra) + ", " +
          reg_name(in.rb);
      break;
    case Op::cmp:
      s = "cmp." + std::string(ir::to_string(in.rel)) + " " + reg_name(in.rd) + ", " + reg_name(in.ra) + ", " +
          reg_name(in.rb);
      break;
    case Op::br: s = "br " + reg_name(in.ra) + ", " + target_text(in.target) + ", " + target_text(in.target2); break;
    case Op::jmp: s = "jmp " + target_text(in.target); break;
    case Op::load: s = "load " + reg_name(in.rd) + ", " + mem(in.ra, in.imm); break;
    case Op::store: s = "store " + reg_name(in.rb) + ", " + mem(in.ra, in.imm); break;
    case Op::add_imm: s = "addi " + reg_name(in.rd) + ", " + reg_name(in.ra) + ", " + std::to_string(in.imm); break;
    case Op::call: s = "call " + in.symbol; break;
    case Op::icall: s = "icall " + reg_name(in.ra); break;
    case Op::ret: s = "ret"; break;
    case Op::read_ext: s = "extern " + reg_name(in.rd); break;
    case Op::keygen: s = "keygen"; break;
    case Op::halt: s = "halt"; break;
    case Op::trap: s = "trap"; break;
    case Op::mac_init: s = "mac_init key"; break;
    case Op::mac_compress:
      s = "mac_compress " + (in.ra == regalloc::kNoReg ? hex(static_cast<std::uint64_t>(in.imm)) : reg_name(in.ra));
      break;
    case Op::mac_finalize: s = "mac_finalize " + reg_name(in.rd); break;
    case Op::mac_check: s = "mac_check " + reg_name(in.ra) + ", " + reg_name(in.rb); break;
  }
  if (!in.comment.empty()) {
    if (s.size() < 28) s.resize(28, ' ');
    s += "  ; " + in.comment;
  }
  return s;
}

std::string listing(const MachineProgram& p) {
  std::ostringstream os;
  std::uint32_t pc = 0;
  auto emit_until = [&](std::uint32_t end) {
    for (; pc < end; ++pc) {
      char addr[16];
      std::snprintf(addr, sizeof addr, "%08llx", static_cast<unsigned long long>(code_address(pc)));
      os << "  " << addr << "  " << format_instr(p.code[pc]) << '\n';
    }
  };
  const std::uint32_t first = p.functions.empty() ? static_cast<std::uint32_t>(p.code.size()) : p.functions.front().start;
  os << "_start:\n";
  emit_until(first);
  for (const auto& f : p.functions) {
    os << '\n' << f.name << ":  ; frame " << f.meta.layout.size << (f.meta.leaf ? ", leaf" : "")
       << (f.meta.instrumented ? ", protected" : "") << '\n';
    emit_until(f.end);
  }
  return os.str();
}

}  // namespace regguard::machine
