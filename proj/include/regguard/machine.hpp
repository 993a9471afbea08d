// Toy register-machine ISA and linked program image.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "regguard/analysis.hpp"
#include "regguard/ir.hpp"
#include "regguard/regalloc.hpp"

namespace regguard::machine {

using regalloc::Reg;

inline constexpr std::uint64_t kCodeBase = 0x400000;
inline constexpr std::uint64_t kInstrBytes = 4;

constexpr std::uint64_t code_address(std::uint32_t pc) { return kCodeBase + kInstrBytes * pc; }

enum class Op : std::uint8_t {
  mov_imm,       // rd = imm (or the address of `symbol` after linking)
  mov_reg,       // rd = ra
  alu,           // rd = ra <alu_op> rb
  cmp,           // rd = ra <rel> rb ? 1 : 0
  br,            // ra != 0 ? target : target2
  jmp,           // target
  load,          // rd = mem[ra + imm]
  store,         // mem[ra + imm] = rb
  add_imm,       // rd = ra + imm
  call,          // lr = next; pc = target
  icall,         // lr = next; pc = ra
  ret,           // pc = lr
  read_ext,      // rd = next external input
  keygen,        // key bank = fresh key
  halt,          // stop, result a0
  trap,          // unreachable code
  mac_init,      // mac state = init(key)
  mac_compress,  // absorb ra, or imm when ra is kNoReg
  mac_finalize,  // rd = finalize(mac state)
  mac_check,     // ra != rb -> integrity violation
};

inline constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::mac_check) + 1;

std::string_view to_string(Op op);
bool is_mac(Op op);

enum class Role : std::uint8_t { none, save, restore };
enum class Slot : std::uint8_t { none, tag, ret, bp, var_reg, arg, callsite_tag };

std::string_view to_string(Slot s);

struct VarRef {
  Reg reg;
  std::uint32_t range;
  friend bool operator==(const VarRef&, const VarRef&) = default;
};

struct MachineInstr {
  Op op = Op::trap;
  Reg rd = regalloc::kNoReg;
  Reg ra = regalloc::kNoReg;
  Reg rb = regalloc::kNoReg;
  std::int64_t imm = 0;
  ir::BinOp alu_op = ir::BinOp::add;
  ir::Rel rel = ir::Rel::eq;
  // Branch targets: function-local indices before linking, absolute pcs after.
  std::int32_t target = -1;
  std::int32_t target2 = -1;
  std::string symbol;  // callee or function whose address is taken

  Role role = Role::none;
  Slot slot = Slot::none;
  bool mac_covered = false;
  std::int32_t src_linear = -1;  // IR program point this came from
  std::vector<VarRef> var_reads, var_writes;
  std::string comment;

  friend bool operator==(const MachineInstr&, const MachineInstr&) = default;
};

struct RangeInfo {
  std::uint32_t id = 0;
  std::string variable;
  std::vector<analysis::Segment> segments;
  regalloc::Location loc;
  std::int64_t spill_offset = 0;  // bp-relative, when spilled

  bool covers(std::uint32_t subpoint) const;
  friend bool operator==(const RangeInfo&, const RangeInfo&) = default;
};

struct CallSiteSlot {
  Slot kind;             // callsite_tag or arg
  Reg reg;               // register saved (tag register for the tag slot)
  std::int64_t offset;   // from sp after the area is reserved
  std::int32_t range;    // range id for arg slots, -1 otherwise
  friend bool operator==(const CallSiteSlot&, const CallSiteSlot&) = default;
};

struct CallSite {
  std::int32_t call_index = -1;  // index of the call/icall instruction (local, then absolute)
  std::uint32_t src_linear = 0;
  std::uint32_t area_bytes = 0;
  bool protected_ = false;
  std::vector<CallSiteSlot> slots;
  friend bool operator==(const CallSite&, const CallSite&) = default;
};

struct MachineFunction {
  std::string name;
  std::uint64_t fid = 0;
  bool leaf = false;
  bool instrumented = false;  // MAC code emitted
  std::uint32_t param_count = 0;
  std::vector<std::string> variables;  // params then locals
  regalloc::FrameLayout layout;
  std::vector<RangeInfo> ranges;
  std::vector<CallSite> calls;
  std::vector<MachineInstr> code;
  std::int32_t body_start = 0;      // first instruction after the prologue
  std::vector<std::int32_t> epilogue_starts;

  friend bool operator==(const MachineFunction&, const MachineFunction&) = default;
};

struct FunctionSpan {
  std::string name;
  std::uint32_t start = 0;
  std::uint32_t end = 0;  // exclusive
  MachineFunction meta;   // code cleared; indices inside are absolute
};

struct MachineProgram {
  std::vector<MachineInstr> code;
  std::vector<FunctionSpan> functions;
  std::string entry;
  std::uint32_t entry_params = 0;

  const FunctionSpan* function_at(std::uint32_t pc) const;
  const FunctionSpan* find(std::string_view name) const;
};

/// 64-bit FNV-1a of a function name.
std::uint64_t function_id(std::string_view name);

std::string format_instr(const MachineInstr& in);
/// Stable listing, one instruction per line with its code address.
std::string listing(const MachineProgram& p);

}  // namespace regguard::machine
