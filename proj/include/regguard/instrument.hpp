// Lowering of allocated functions to machine code with tag generation and
// verification around saved registers, and linking into one image.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "regguard/machine.hpp"

namespace regguard::instrument {

enum class Mode { chained, independent };

std::string_view to_string(Mode m);

struct InstrumentConfig {
  bool enabled = true;  // false: plain code, no MAC instructions anywhere
  Mode mode = Mode::chained;
  bool skip_leaf = true;
  bool protect_caller_saved = false;

  friend bool operator==(const InstrumentConfig&, const InstrumentConfig&) = default;
};

class LoweringError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LinkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything lowering needs to know about one function.
struct FunctionPlan {
  const ir::Function* function = nullptr;
  analysis::Liveness liveness;
  std::vector<analysis::LiveRange> ranges;
  regalloc::Allocation alloc;
  regalloc::FrameLayout layout;
};

machine::MachineFunction lower_function(const FunctionPlan& plan, const regalloc::RegisterFileConfig& rf,
                                        const InstrumentConfig& cfg);

/// Caller-saved state live across one call: argument registers holding
/// parameters, with the range that owns each.
struct LiveCallerState {
  std::vector<machine::VarRef> saved;
};

struct CallLowering {
  std::vector<machine::MachineInstr> before;  // area reservation, saves, tag
  std::vector<machine::MachineInstr> after;   // reloads, check, area release
  machine::CallSite site;
};

/// Save/restore sequences around one call. Argument marshalling and the call
/// itself are emitted by the caller between `before` and `after`.
CallLowering lower_callsite(const LiveCallerState& live, std::uint64_t fid, const InstrumentConfig& cfg);

/// Startup stub (fresh key, empty tag, entry arguments from input, call,
/// halt) followed by every function, with calls and addresses resolved.
machine::MachineProgram link_program(const ir::Program& p, std::vector<machine::MachineFunction> code);

/// Instructions that could move the key into memory or a general register.
/// Empty for every program this lowering produces.
std::vector<std::uint32_t> key_exposures(const machine::MachineProgram& p);

}  // namespace regguard::instrument
