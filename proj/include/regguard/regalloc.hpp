// Register file model, security-priority allocation and frame layout.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "regguard/analysis.hpp"
#include "regguard/scoring.hpp"

namespace regguard::regalloc {

// Fixed register numbering shared by the code generator and the VM.
//   a0..a7   argument registers (caller-saved), a0 also carries results
//   t0..t15  caller-saved temporaries; t0..t5 are scratch for lowering
//   v0..v31  callee-saved variable registers
//   tag, bp, lr, sp
// The key register lives in a separate bank and has no general id.
using Reg = std::uint8_t;

inline constexpr Reg kArgBase = 0;
inline constexpr Reg kMaxArgRegs = 8;
inline constexpr Reg kTmpBase = 8;
inline constexpr Reg kMaxTmpRegs = 16;
inline constexpr Reg kVarBase = 24;
inline constexpr Reg kMaxVarRegs = 32;
inline constexpr Reg kTag = 56;
inline constexpr Reg kBp = 57;
inline constexpr Reg kLr = 58;
inline constexpr Reg kSp = 59;
inline constexpr Reg kNumRegs = 60;
inline constexpr Reg kKeyBank = 0xFF;  // never a valid general register
inline constexpr Reg kNoReg = 0xFE;

constexpr Reg arg_reg(unsigned i) { return static_cast<Reg>(kArgBase + i); }
constexpr Reg tmp_reg(unsigned i) { return static_cast<Reg>(kTmpBase + i); }
constexpr Reg var_reg(unsigned i) { return static_cast<Reg>(kVarBase + i); }
constexpr bool is_arg_reg(Reg r) { return r < kArgBase + kMaxArgRegs; }
constexpr bool is_tmp_reg(Reg r) { return r >= kTmpBase && r < kTmpBase + kMaxTmpRegs; }
constexpr bool is_var_reg(Reg r) { return r >= kVarBase && r < kVarBase + kMaxVarRegs; }

std::string reg_name(Reg r);
std::optional<Reg> parse_reg(std::string_view name);

// Scratch assignments used by lowering.
inline constexpr Reg kScratchA = tmp_reg(0);
inline constexpr Reg kScratchB = tmp_reg(1);
inline constexpr Reg kRefTag = tmp_reg(2);
inline constexpr Reg kRecomputed = tmp_reg(3);
inline constexpr Reg kCallResult = tmp_reg(4);
inline constexpr Reg kCycleBreak = tmp_reg(5);
inline constexpr unsigned kMinTmpRegs = 6;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RegisterFileConfig {
  unsigned n_var_regs = 8;
  unsigned n_arg_regs = 8;
  unsigned n_tmp_regs = 7;
  std::uint32_t warning_threshold = 4;

  Reg tag = kTag;
  Reg key = kKeyBank;
  Reg sp = kSp;
  Reg bp = kBp;
  Reg link = kLr;

  /// Throws ConfigError when the configuration cannot be used.
  void validate() const;
};

struct Location {
  enum class Kind { reg, spill };
  Kind kind = Kind::reg;
  Reg reg = kNoReg;
  std::uint32_t slot = 0;

  static Location in_reg(Reg r) { return {Kind::reg, r, 0}; }
  static Location spilled(std::uint32_t s) { return {Kind::spill, kNoReg, s}; }
  bool is_reg() const { return kind == Kind::reg; }
  friend bool operator==(const Location&, const Location&) = default;
};

struct Warning {
  std::string variable;
  std::string reason;
  friend bool operator==(const Warning&, const Warning&) = default;
};

struct Allocation {
  std::map<std::uint32_t, Location> assignment;
  std::vector<Warning> warnings;
  std::map<std::uint32_t, scoring::SecurityScore> score_of;
  std::uint32_t spill_slots = 0;
  /// True when greedy order alone spilled a critical range that an exact
  /// colouring of the critical ranges could place.
  bool used_exact_critical = false;

  std::vector<Reg> used_var_regs() const;
  friend bool operator==(const Allocation&, const Allocation&) = default;
};

/// Ranges of parameters are precoloured to their argument register; ranges
/// listed in `order` are allocated greedily to callee-saved variable
/// registers. Any other range (none, for ranges built from the same function)
/// would be left unassigned.
Allocation allocate(const ir::Function& f, const std::vector<analysis::LiveRange>& ranges,
                    const analysis::InterferenceGraph& graph, const std::vector<std::uint32_t>& order,
                    const RegisterFileConfig& cfg);

/// Largest number of simultaneously live ranges in `subset` at any sub-point.
std::uint32_t max_pressure(const std::vector<analysis::LiveRange>& ranges,
                           const std::vector<std::uint32_t>& subset);

enum class SlotKind { tag, ret, bp, var_reg };

struct SaveSlot {
  SlotKind kind;
  Reg reg;             // register saved here (tag, lr, bp or a var register)
  std::int64_t offset;  // from the post-prologue stack pointer
  friend bool operator==(const SaveSlot&, const SaveSlot&) = default;
};

struct PinnedSlot {
  std::string variable;
  std::int64_t offset;
  std::uint32_t bytes;
  friend bool operator==(const PinnedSlot&, const PinnedSlot&) = default;
};

struct FrameLayout {
  std::uint32_t size = 0;
  std::vector<SaveSlot> saves;  // save order: tag, ret, bp, var registers ascending
  std::vector<std::int64_t> spill_offsets;
  std::vector<PinnedSlot> pinned;

  const SaveSlot* find(SlotKind k, Reg r = kNoReg) const;
  std::int64_t offset_of(SlotKind k, Reg r = kNoReg) const;
  const PinnedSlot* find_pinned(const std::string& var) const;
  friend bool operator==(const FrameLayout&, const FrameLayout&) = default;
};

FrameLayout frame_layout(const ir::Function& f, const Allocation& alloc, const RegisterFileConfig& cfg);

/// `#id variable -> reg|spill N` lines in range-id order.
std::string dump_alloc(const std::vector<analysis::LiveRange>& ranges, const Allocation& alloc);

}  // namespace regguard::regalloc
