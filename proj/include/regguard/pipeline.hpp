// Compile profiles and the full source-to-machine pipeline.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "regguard/instrument.hpp"
#include "regguard/scoring.hpp"

namespace regguard::pipeline {

struct Profile {
  std::string name = "poc";
  regalloc::RegisterFileConfig regs;
  instrument::InstrumentConfig instrument;

  friend bool operator==(const Profile& a, const Profile& b) {
    return a.name == b.name && a.regs.n_var_regs == b.regs.n_var_regs && a.regs.n_arg_regs == b.regs.n_arg_regs &&
           a.regs.n_tmp_regs == b.regs.n_tmp_regs && a.regs.warning_threshold == b.regs.warning_threshold &&
           a.instrument == b.instrument;
  }
};

/// Presets: poc (chained tags, leaf skip, callee-saved only), full (adds
/// caller-saved protection at call sites), plain (no instrumentation).
Profile preset(std::string_view name);
std::vector<std::string> preset_names();

struct CompiledFunction {
  std::string name;
  analysis::DefUseInfo du;
  analysis::Liveness liveness;
  std::vector<analysis::LiveRange> ranges;
  analysis::InterferenceGraph graph;
  std::map<std::string, scoring::SecurityScore> scores;
  std::vector<std::uint32_t> order;
  regalloc::Allocation alloc;
  regalloc::FrameLayout layout;
};

struct Compiled {
  ir::Program program;
  Profile profile;
  std::vector<CompiledFunction> functions;
  machine::MachineProgram machine;

  const CompiledFunction* find(std::string_view name) const;
};

/// Analysis and allocation for one function, without lowering.
CompiledFunction analyse_function(const ir::Function& f, const regalloc::RegisterFileConfig& regs);

Compiled compile(const ir::Program& p, const Profile& profile);
Compiled compile_source(std::string_view text, const Profile& profile);

std::string dump_scores(const Compiled& c);
std::string dump_alloc(const Compiled& c);
std::string dump_liveness(const Compiled& c);

/// JSON manifest: profile flags, and per function the score table, ranges
/// with their locations, warnings, frame layout and leaf flag.
std::string manifest_json(const Compiled& c);
/// Profile recorded in a manifest, so recompiling reproduces the listing.
Profile profile_from_manifest(std::string_view json_text);

// ---------------------------------------------------------------------------
// corpus statistics

struct FunctionStats {
  std::string file;
  std::string function;
  std::uint32_t variables = 0;  // params + scalar locals + buffers
  std::uint32_t arguments = 0;
};

struct CorpusStats {
  std::vector<FunctionStats> functions;
  std::vector<std::string> errors;  // unreadable or invalid files

  double mean_variables() const;
  double mean_arguments() const;
  double fraction_below(std::uint32_t n) const;  // fraction with fewer than n variables
  std::string report() const;
  std::string summary_line() const;
  std::string to_json() const;
};

CorpusStats corpus_stats(const std::string& directory);

}  // namespace regguard::pipeline
