// Interpreter for the toy machine with a key bank, scripted stack adversary,
// integrity-violation detection and instruction accounting.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "regguard/mac.hpp"
#include "regguard/machine.hpp"

namespace regguard::vm {

inline constexpr std::uint64_t kStackTop = 0x80000000ULL;
inline constexpr std::uint32_t kDefaultStackBytes = 64 * 1024;

enum class Status { running, completed, integrity_violation, fault };
enum class FaultKind { none, out_of_bounds, bad_opcode, max_instructions, stack_overflow };

std::string_view to_string(Status s);
std::string_view to_string(FaultKind k);

struct CostModel {
  std::uint64_t mac_init = 4;
  std::uint64_t mac_compress = 6;
  std::uint64_t mac_finalize = 10;
  std::uint64_t mac_check = 1;
  std::uint64_t other = 1;

  std::uint64_t of(machine::Op op) const;
};

struct Limits {
  std::uint64_t max_instructions = 50'000'000;
  std::uint32_t stack_bytes = kDefaultStackBytes;
};

// ---------------------------------------------------------------------------
// adversary scripts

class ScriptError : public std::runtime_error {
 public:
  ScriptError(int line, const std::string& msg)
      : std::runtime_error(line > 0 ? "script line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Target {
  enum class Kind { sp_rel, bp_rel, absolute, slot };
  Kind kind = Kind::absolute;
  std::int64_t offset = 0;
  std::uint64_t address = 0;
  std::string name;  // slot name
};

struct Action {
  enum class Kind { write, xor_mask, bytes, read };
  Kind kind = Kind::write;
  Target target;
  std::uint64_t value = 0;         // write / xor
  std::vector<std::uint8_t> data;  // bytes
  std::uint32_t length = 0;        // read
};

enum class Site { after_prologue, before_epilogue, at_call };

struct Trigger {
  enum class Kind { icount, site };
  Kind kind = Kind::icount;
  std::uint64_t icount = 0;
  std::string function;
  std::uint32_t invocation = 0;  // 0: every invocation
  Site site = Site::after_prologue;
  std::uint32_t call_site = 0;   // 1-based static call-site index for at_call
};

struct Event {
  Trigger trigger;
  Action action;
  int line = 0;
};

struct Replay {
  std::string function;
  std::uint32_t capture = 0;
  std::uint32_t inject = 0;
  int line = 0;
};

struct AdversaryScript {
  std::vector<Event> events;
  std::vector<Replay> replays;

  bool empty() const { return events.empty() && replays.empty(); }
};

AdversaryScript parse_adversary(std::string_view text);
/// Throws ScriptError when a trigger names a function or call site the
/// program does not have.
void validate_script(const AdversaryScript& s, const machine::MachineProgram& p);

// ---------------------------------------------------------------------------
// outcomes

struct TranscriptEntry {
  std::uint64_t icount = 0;
  std::uint64_t address = 0;
  std::vector<std::uint8_t> bytes;
  bool mapped = true;
};

struct WriteRecord {
  std::uint64_t icount = 0;
  std::uint64_t address = 0;
  std::uint32_t size = 0;
  bool applied = false;
  bool changed = false;  // at least one byte differed from memory
  std::string note;
};

struct FunctionCounters {
  std::uint64_t calls = 0;
  std::uint64_t instructions = 0;
  std::uint64_t cost = 0;
  std::uint64_t mac_cost = 0;
};

struct Counters {
  std::uint64_t instructions = 0;
  std::uint64_t cost = 0;
  std::uint64_t mac_cost = 0;
  std::array<std::uint64_t, machine::kOpCount> per_op{};
  std::map<std::string, FunctionCounters> per_function;
};

struct CallRecord {
  std::string callee;
  std::vector<std::string> args;
  std::string result;
  friend bool operator==(const CallRecord&, const CallRecord&) = default;
};

struct SaveEvent {
  std::uint64_t icount = 0;  // executed-instruction count just after the store
  std::uint64_t address = 0;
  std::string function;
  machine::Slot slot = machine::Slot::none;
  bool covered = false;
};

struct RunOutcome {
  Status status = Status::running;
  std::int64_t value = 0;
  std::uint32_t violation_pc = 0;
  std::string violation_function;
  FaultKind fault = FaultKind::none;
  std::string fault_detail;
  std::vector<TranscriptEntry> transcript;
  std::vector<WriteRecord> writes;
  std::optional<std::uint64_t> detection_latency;
  Counters counters;
  std::vector<CallRecord> trace;
  std::vector<SaveEvent> saves;
  std::vector<std::string> shadow_violations;
  std::vector<std::string> audit_violations;
  std::vector<std::string> notes;

  int exit_code() const;
  /// Completed after at least one byte-changing adversary write.
  bool corrupted() const;
  /// Any adversary write changed memory, whatever the final status.
  bool memory_changed() const;
  std::string verdict() const;
  /// Single-line key=value record.
  std::string summary_line() const;
  std::string to_json() const;
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // fresh key from the OS when absent
  std::vector<std::int64_t> inputs;
  Limits limits;
  CostModel costs;
  bool shadow_liveness = false;
  bool audit = false;
  bool trace_saves = false;
};

/// Single-use interpreter; `run` may be called once.
class Machine {
 public:
  Machine(const machine::MachineProgram& prog, RunOptions opts);
  RunOutcome run(const AdversaryScript& adversary);

  const mac::MacKey& key() const { return key_; }
  const std::vector<std::uint8_t>& stack_memory() const { return mem_; }
  std::uint64_t stack_base() const { return kStackTop - mem_.size(); }

 private:
  class Impl;
  const machine::MachineProgram& prog_;
  RunOptions opts_;
  mac::MacKey key_{};
  std::vector<std::uint8_t> mem_;
  bool ran_ = false;
};

RunOutcome run(const machine::MachineProgram& prog, const AdversaryScript& adversary, const RunOptions& opts);

struct FrameRef {
  std::string function;
  std::uint32_t call = 1;
};

RunOutcome replay_attack(const machine::MachineProgram& prog, const FrameRef& capture, const FrameRef& inject,
                         const RunOptions& opts);

struct FunctionOverhead {
  std::string name;
  std::uint64_t calls = 0;
  std::uint64_t plain_cost = 0;
  std::uint64_t instrumented_cost = 0;
  std::uint64_t mac_cost = 0;
};

struct OverheadReport {
  std::uint64_t plain_instructions = 0, instrumented_instructions = 0;
  std::uint64_t plain_cost = 0, instrumented_cost = 0, mac_cost = 0;
  double ratio = 1.0;      // instrumented_cost / plain_cost
  double mac_share = 0.0;  // mac_cost / instrumented_cost
  bool results_match = true;
  std::vector<FunctionOverhead> functions;

  std::string table() const;
  std::string summary_line() const;
  std::string to_json() const;
};

OverheadReport measure_overhead(const machine::MachineProgram& instrumented, const machine::MachineProgram& plain,
                                const RunOptions& opts);

}  // namespace regguard::vm
