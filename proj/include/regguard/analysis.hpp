// Intraprocedural dataflow facts: def/use classification, per-instruction
// liveness, def-use webs (live ranges) and their interference graph.
//
// Program points are linearised in block order. Each instruction at linear
// index L owns two sub-points: 2L (operands are read) and 2L+1 (result is
// written). Live-range segments are half-open intervals over sub-points, so a
// value dying at an instruction and the value it defines never overlap, and a
// dead definition still occupies its write sub-point.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "regguard/ir.hpp"

namespace regguard::analysis {

struct ProgramPoint {
  std::uint32_t block = 0;
  std::uint32_t index = 0;

  friend auto operator<=>(const ProgramPoint&, const ProgramPoint&) = default;
};

enum class DefKind { immediate, copy, external, call_result, load_result, arith_result, address_result, entry };
enum class UseKind { branch_cond, comparison_operand, call_target, call_arg, address_taken, store_source, plain };

std::string_view to_string(DefKind k);
std::string_view to_string(UseKind k);

struct DefSite {
  ProgramPoint site;
  DefKind kind;
  friend bool operator==(const DefSite&, const DefSite&) = default;
};

struct UseSite {
  ProgramPoint site;
  UseKind kind;
  friend bool operator==(const UseSite&, const UseSite&) = default;
};

struct VarDefUse {
  std::vector<DefSite> defs;
  std::vector<UseSite> uses;

  bool has_def(DefKind k) const;
  bool has_use(UseKind k) const;
};

/// Keyed by variable name; every declared variable has an entry. Params carry
/// an `entry` def at point {0,0}.
struct DefUseInfo {
  std::map<std::string, VarDefUse> vars;

  const VarDefUse& at(const std::string& name) const { return vars.at(name); }
};

DefUseInfo classify_defs_uses(const ir::Function& f);

/// Variables that live in memory for the whole function: buffers and every
/// variable whose address is taken. They are never register candidates.
std::set<std::string> pinned_variables(const ir::Function& f);

/// Block-order linearisation helper shared by liveness, ranges and lowering.
class PointIndex {
 public:
  explicit PointIndex(const ir::Function& f);
  std::uint32_t linear(ProgramPoint p) const { return block_start_[p.block] + p.index; }
  ProgramPoint point(std::uint32_t linear) const;
  std::uint32_t size() const { return total_; }
  std::uint32_t block_start(std::uint32_t b) const { return block_start_[b]; }

  static std::uint32_t read_slot(std::uint32_t linear) { return 2 * linear; }
  static std::uint32_t write_slot(std::uint32_t linear) { return 2 * linear + 1; }

 private:
  std::vector<std::uint32_t> block_start_;
  std::uint32_t total_ = 0;
};

/// Per-instruction live sets over the tracked (non-pinned) variables.
struct Liveness {
  std::vector<std::string> tracked;       // tracked variable names, params first
  std::map<std::string, std::size_t> id;  // name -> index into `tracked`
  // [block][instruction] -> set of tracked ids live before / after it.
  std::vector<std::vector<std::vector<bool>>> live_in, live_out;

  bool live_before(ProgramPoint p, const std::string& var) const;
  bool live_after(ProgramPoint p, const std::string& var) const;
  std::vector<std::string> names(const std::vector<bool>& set) const;
};

Liveness compute_liveness(const ir::Function& f);

/// Successor block indices of block `b` (from its terminator).
std::vector<std::uint32_t> block_successors(const ir::Function& f, std::uint32_t b);

struct Segment {
  std::uint32_t begin = 0;  // sub-point, inclusive
  std::uint32_t end = 0;    // sub-point, exclusive
  friend auto operator<=>(const Segment&, const Segment&) = default;
};

struct LiveRange {
  std::uint32_t id = 0;
  std::string variable;
  std::vector<Segment> segments;  // sorted, disjoint, non-adjacent
  std::vector<ProgramPoint> defs;
  bool entry_def = false;  // defined on function entry (params, or read before written)
  std::uint32_t use_count = 0;

  bool covers(std::uint32_t subpoint) const;
  bool overlaps(const LiveRange& other) const;
  std::uint32_t first_slot() const { return segments.empty() ? 0 : segments.front().begin; }
};

std::vector<LiveRange> build_live_ranges(const ir::Function& f, const Liveness& live, const DefUseInfo& du);

struct InterferenceGraph {
  std::vector<std::uint32_t> nodes;
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;  // (lo, hi)

  bool interferes(std::uint32_t a, std::uint32_t b) const;
  std::vector<std::uint32_t> neighbours(std::uint32_t n) const;
};

InterferenceGraph build_interference(const std::vector<LiveRange>& ranges);

/// One line per program point: `block:index live_in={..} live_out={..}  instr`.
std::string dump_liveness(const ir::Function& f, const Liveness& live);

}  // namespace regguard::analysis
