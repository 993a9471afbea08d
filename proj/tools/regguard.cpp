// regguard command-line driver: compile, run, attack, stats, overhead, selftest.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "regguard/mac.hpp"
#include "regguard/pipeline.hpp"
#include "regguard/vm.hpp"

namespace {

using namespace regguard;

constexpr int kExitCompileError = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string profile = "poc";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> regs;
  std::optional<std::string> mode;
  bool full = false;
  bool no_skip_leaf = false;
  bool emit_asm = false;
  bool dump_scores = false;
  bool dump_alloc = false;
  bool dump_liveness = false;
  bool json = false;
  bool mac_selftest = false;
  std::string inputs;
  std::string flags_from;

  std::string input;
  std::string script;
  std::string output;
  std::string directory;
  bool shadow = false;
  bool audit = false;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << text;
}

std::vector<std::int64_t> parse_inputs(const std::string& spec) {
  std::string text = spec;
  if (!text.empty() && text[0] == '@') text = read_file(text.substr(1));
  for (auto& c : text)
    if (c == ',') c = ' ';
  std::istringstream is(text);
  std::vector<std::int64_t> out;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(static_cast<std::int64_t>(std::stoll(tok, &used, 0)));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad input value '" + tok + "'");
    }
  }
  return out;
}

pipeline::Profile make_profile(const Options& o) {
  pipeline::Profile p;
  if (!o.flags_from.empty()) {
    p = pipeline::profile_from_manifest(read_file(o.flags_from));
  } else {
    try {
      p = pipeline::preset(o.profile);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (o.regs) p.regs.n_var_regs = *o.regs;
  if (o.mode) {
    if (*o.mode == "chained")
      p.instrument.mode = instrument::Mode::chained;
    else if (*o.mode == "independent")
      p.instrument.mode = instrument::Mode::independent;
    else
      throw UsageError("unknown mode '" + *o.mode + "' (expected chained or independent)");
  }
  if (o.full) p.instrument.protect_caller_saved = true;
  if (o.no_skip_leaf) p.instrument.skip_leaf = false;
  try {
    p.regs.validate();
  } catch (const regalloc::ConfigError& e) {
    throw UsageError(e.what());
  }
  return p;
}

vm::RunOptions run_options(const Options& o) {
  vm::RunOptions r;
  r.seed = o.seed;
  r.inputs = parse_inputs(o.inputs);
  r.shadow_liveness = o.shadow;
  r.audit = o.audit;
  return r;
}

pipeline::Compiled compile_input(const Options& o) {
  return pipeline::compile_source(read_file(o.input), make_profile(o));
}

void print_warnings(const pipeline::Compiled& c) {
  for (const auto& f : c.functions)
    for (const auto& w : f.alloc.warnings)
      std::cerr << "warning: " << f.name << ": " << w.variable << ": " << w.reason << '\n';
}

void print_dumps(const Options& o, const pipeline::Compiled& c) {
  if (o.dump_scores) std::cout << pipeline::dump_scores(c);
  if (o.dump_alloc) std::cout << pipeline::dump_alloc(c);
  if (o.dump_liveness) std::cout << pipeline::dump_liveness(c);
  if (o.emit_asm) std::cout << machine::listing(c.machine);
}

int print_selftest() {
  const auto r = mac::run_selftest();
  std::cout << r.report;
  std::cout << "siphash24 vectors passed=" << r.passed << " failed=" << r.failed << '\n';
  return r.ok() ? 0 : 1;
}

int cmd_compile(const Options& o) {
  const auto c = compile_input(o);
  print_warnings(c);
  print_dumps(o, c);
  const std::string manifest = pipeline::manifest_json(c);
  if (!o.output.empty()) {
    write_file(o.output + ".asm", machine::listing(c.machine));
    write_file(o.output + ".manifest.json", manifest);
  }
  if (o.json) {
    std::cout << manifest;
  } else if (!o.emit_asm && !o.dump_scores && !o.dump_alloc && !o.dump_liveness) {
    std::size_t mac = 0, warnings = 0;
    for (const auto& m : c.machine.code) mac += machine::is_mac(m.op);
    for (const auto& f : c.functions) warnings += f.alloc.warnings.size();
    std::cout << "profile=" << c.profile.name << " functions=" << c.functions.size()
              << " instructions=" << c.machine.code.size() << " mac_instructions=" << mac << " warnings=" << warnings
              << '\n';
  }
  return 0;
}

void print_outcome(const Options& o, const vm::RunOutcome& r) {
  if (o.json) {
    std::cout << r.to_json() << '\n';
    return;
  }
  std::cout << r.verdict() << '\n';
  for (const auto& n : r.notes) std::cout << "note: " << n << '\n';
  for (const auto& t : r.transcript) {
    std::cout << "read @" << t.icount << " 0x" << std::hex << t.address << std::dec << ":";
    char b[4];
    for (auto x : t.bytes) {
      std::snprintf(b, sizeof b, " %02x", x);
      std::cout << b;
    }
    std::cout << (t.mapped ? "" : " (unmapped)") << '\n';
  }
  for (const auto& s : r.shadow_violations) std::cout << "shadow: " << s << '\n';
  for (const auto& s : r.audit_violations) std::cout << "audit: " << s << '\n';
  std::cout << r.summary_line() << '\n';
}

int cmd_run(const Options& o) {
  const auto c = compile_input(o);
  print_warnings(c);
  print_dumps(o, c);
  const auto r = vm::run(c.machine, {}, run_options(o));
  print_outcome(o, r);
  return r.exit_code();
}

int cmd_attack(const Options& o) {
  const auto c = compile_input(o);
  print_warnings(c);
  print_dumps(o, c);
  const auto script = vm::parse_adversary(read_file(o.script));
  vm::validate_script(script, c.machine);
  const auto r = vm::run(c.machine, script, run_options(o));
  print_outcome(o, r);
  return r.exit_code();
}

int cmd_stats(const Options& o) {
  const auto st = pipeline::corpus_stats(o.directory);
  if (o.json) {
    std::cout << st.to_json() << '\n';
  } else {
    std::cout << st.report() << st.summary_line() << '\n';
  }
  return 0;
}

int cmd_overhead(const Options& o) {
  const std::string text = read_file(o.input);
  const auto inst = pipeline::compile_source(text, make_profile(o));
  pipeline::Profile plain = inst.profile;
  plain.name = "plain";
  plain.instrument.enabled = false;
  const auto base = pipeline::compile_source(text, plain);
  print_dumps(o, inst);
  const auto rep = vm::measure_overhead(inst.machine, base.machine, run_options(o));
  if (o.json)
    std::cout << rep.to_json() << '\n';
  else
    std::cout << rep.table() << rep.summary_line() << '\n';
  return rep.results_match ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regguard: security-prioritised register allocation with keyed-MAC frame protection"};
  app.require_subcommand(0, 1);
  Options o;

  app.add_option("--profile", o.profile, "compile profile: poc, full or plain");
  app.add_option("--seed", o.seed, "seed for the VM key generator (fresh key when absent)");
  app.add_option("--regs", o.regs, "number of callee-saved variable registers");
  app.add_option("--mode", o.mode, "tag mode: chained or independent");
  app.add_flag("--full", o.full, "protect caller-saved registers at call sites");
  app.add_flag("--no-skip-leaf", o.no_skip_leaf, "instrument leaf functions too");
  app.add_flag("--emit-asm", o.emit_asm, "print the machine listing");
  app.add_flag("--dump-scores", o.dump_scores, "print security scores in rank order");
  app.add_flag("--dump-alloc", o.dump_alloc, "print range locations");
  app.add_flag("--dump-liveness", o.dump_liveness, "print per-point live sets");
  app.add_flag("--json", o.json, "machine-readable JSON output");
  app.add_option("--inputs", o.inputs, "external inputs: comma separated values or @file");
  app.add_option("--flags-from", o.flags_from, "take compile flags from a manifest");
  app.add_flag("--mac-selftest", o.mac_selftest, "run the SipHash-2-4 reference vectors");

  auto* compile = app.add_subcommand("compile", "compile an IR program");
  compile->add_option("input", o.input, "IR file")->required();
  compile->add_option("-o,--output", o.output, "output prefix for .asm and .manifest.json");

  auto* run = app.add_subcommand("run", "compile and run without an adversary");
  run->add_option("input", o.input, "IR file")->required();
  run->add_flag("--shadow", o.shadow, "check register liveness while running");
  run->add_flag("--audit", o.audit, "check reference tags against generated ones");

  auto* attack = app.add_subcommand("attack", "compile and run under an adversary script");
  attack->add_option("input", o.input, "IR file")->required();
  attack->add_option("script", o.script, "adversary script")->required();

  auto* stats = app.add_subcommand("stats", "variables and arguments per function over a corpus");
  stats->add_option("directory", o.directory, "directory of .ir files")->required();

  auto* overhead = app.add_subcommand("overhead", "instruction-count overhead against the plain build");
  overhead->add_option("input", o.input, "IR file")->required();

  auto* selftest = app.add_subcommand("selftest", "run the SipHash-2-4 reference vectors");

  for (auto* sub : {compile, run, attack, stats, overhead, selftest}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (o.mac_selftest || selftest->parsed()) return print_selftest();
    if (compile->parsed()) return cmd_compile(o);
    if (run->parsed()) return cmd_run(o);
    if (attack->parsed()) return cmd_attack(o);
    if (stats->parsed()) return cmd_stats(o);
    if (overhead->parsed()) return cmd_overhead(o);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const ir::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompileError;
  } catch (const instrument::LoweringError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompileError;
  } catch (const instrument::LinkError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCompileError;
  } catch (const regalloc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const vm::ScriptError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}
