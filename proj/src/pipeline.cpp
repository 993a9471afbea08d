#include "regguard/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace regguard::pipeline {

Profile preset(std::string_view name) {
  Profile p;
  p.name = std::string(name);
  if (name == "poc") return p;
  if (name == "full") {
    p.instrument.protect_caller_saved = true;
    return p;
  }
  if (name == "plain") {
    p.instrument.enabled = false;
    return p;
  }
  throw std::invalid_argument("unknown profile '" + std::string(name) + "' (expected poc, full or plain)");
}

std::vector<std::string> preset_names() { return {"poc", "full", "plain"}; }

const CompiledFunction* Compiled::find(std::string_view name) const {
  for (const auto& f : functions)
    if (f.name == name) return &f;
  return nullptr;
}

CompiledFunction analyse_function(const ir::Function& f, const regalloc::RegisterFileConfig& regs) {
  CompiledFunction cf;
  cf.name = f.name;
  cf.du = analysis::classify_defs_uses(f);
  cf.liveness = analysis::compute_liveness(f);
  cf.ranges = analysis::build_live_ranges(f, cf.liveness, cf.du);
  cf.graph = analysis::build_interference(cf.ranges);
  cf.scores = scoring::score_function(f, cf.du);
  cf.order = scoring::rank_candidates(cf.ranges, cf.scores, cf.du);
  cf.alloc = regalloc::allocate(f, cf.ranges, cf.graph, cf.order, regs);
  cf.layout = regalloc::frame_layout(f, cf.alloc, regs);
  return cf;
}

Compiled compile(const ir::Program& p, const Profile& profile) {
  Compiled c;
  c.program = p;
  c.profile = profile;
  std::vector<machine::MachineFunction> code;
  for (const auto& f : c.program.functions) {
    c.functions.push_back(analyse_function(f, profile.regs));
    const auto& cf = c.functions.back();
    instrument::FunctionPlan plan{&f, cf.liveness, cf.ranges, cf.alloc, cf.layout};
    code.push_back(instrument::lower_function(plan, profile.regs, profile.instrument));
  }
  c.machine = instrument::link_program(c.program, std::move(code));
  return c;
}

Compiled compile_source(std::string_view text, const Profile& profile) {
  return compile(ir::parse_program(text), profile);
}

std::string dump_scores(const Compiled& c) {
  std::ostringstream os;
  for (const auto& f : c.functions) {
    os << "# " << f.name << '\n' << scoring::dump_scores(f.ranges, f.scores, f.du);
  }
  return os.str();
}

std::string dump_alloc(const Compiled& c) {
  std::ostringstream os;
  for (const auto& f : c.functions) os << "# " << f.name << '\n' << regalloc::dump_alloc(f.ranges, f.alloc);
  return os.str();
}

std::string dump_liveness(const Compiled& c) {
  std::ostringstream os;
  for (std::size_t i = 0; i < c.functions.size(); ++i)
    os << analysis::dump_liveness(c.program.functions[i], c.functions[i].liveness);
  return os.str();
}

namespace {

using json = nlohmann::ordered_json;

std::string slot_kind_name(regalloc::SlotKind k) {
  switch (k) {
    case regalloc::SlotKind::tag: return "tag";
    case regalloc::SlotKind::ret: return "ret";
    case regalloc::SlotKind::bp: return "bp";
    case regalloc::SlotKind::var_reg: return "var";
  }
  return "?";
}

json profile_json(const Profile& p) {
  return {{"profile", p.name},
          {"regs", p.regs.n_var_regs},
          {"arg_regs", p.regs.n_arg_regs},
          {"tmp_regs", p.regs.n_tmp_regs},
          {"warning_threshold", p.regs.warning_threshold},
          {"instrument", p.instrument.enabled},
          {"mode", std::string(instrument::to_string(p.instrument.mode))},
          {"skip_leaf", p.instrument.skip_leaf},
          {"protect_caller_saved", p.instrument.protect_caller_saved}};
}

}  // namespace

std::string manifest_json(const Compiled& c) {
  json j;
  j["flags"] = profile_json(c.profile);
  j["entry"] = c.program.entry;
  auto& fns = j["functions"] = json::array();
  for (std::size_t i = 0; i < c.functions.size(); ++i) {
    const auto& cf = c.functions[i];
    const auto& mf = c.machine.functions[i].meta;
    json f;
    f["name"] = cf.name;
    f["leaf"] = mf.leaf;
    f["instrumented"] = mf.instrumented;
    auto& sc = f["scores"] = json::array();
    std::vector<std::string> seen;
    for (auto id : cf.order) {
      const auto& v = cf.ranges[id].variable;
      if (std::find(seen.begin(), seen.end(), v) != seen.end()) continue;
      seen.push_back(v);
      sc.push_back({{"variable", v}, {"score", cf.scores.at(v).value}});
    }
    auto& rs = f["ranges"] = json::array();
    for (const auto& r : cf.ranges) {
      json rj;
      rj["id"] = r.id;
      rj["variable"] = r.variable;
      auto& segs = rj["segments"] = json::array();
      for (const auto& s : r.segments) segs.push_back({s.begin, s.end});
      const auto& loc = cf.alloc.assignment.at(r.id);
      if (loc.is_reg())
        rj["location"] = regalloc::reg_name(loc.reg);
      else
        rj["location"] = "spill " + std::to_string(loc.slot);
      if (auto it = cf.alloc.score_of.find(r.id); it != cf.alloc.score_of.end()) rj["score"] = it->second.value;
      rs.push_back(std::move(rj));
    }
    auto& ws = f["warnings"] = json::array();
    for (const auto& w : cf.alloc.warnings) ws.push_back({{"variable", w.variable}, {"reason", w.reason}});
    json fl;
    fl["size"] = cf.layout.size;
    auto& saves = fl["saves"] = json::array();
    for (const auto& s : cf.layout.saves)
      saves.push_back({{"kind", slot_kind_name(s.kind)}, {"reg", regalloc::reg_name(s.reg)}, {"offset", s.offset}});
    fl["spills"] = cf.layout.spill_offsets;
    auto& pins = fl["pinned"] = json::array();
    for (const auto& p : cf.layout.pinned)
      pins.push_back({{"variable", p.variable}, {"offset", p.offset}, {"bytes", p.bytes}});
    f["frame"] = std::move(fl);
    fns.push_back(std::move(f));
  }
  return j.dump(2) + "\n";
}

Profile profile_from_manifest(std::string_view text) {
  const auto j = json::parse(text);
  const auto& fl = j.at("flags");
  Profile p = preset(fl.at("profile").get<std::string>());
  p.regs.n_var_regs = fl.at("regs").get<unsigned>();
  p.regs.n_arg_regs = fl.at("arg_regs").get<unsigned>();
  p.regs.n_tmp_regs = fl.at("tmp_regs").get<unsigned>();
  p.regs.warning_threshold = fl.at("warning_threshold").get<std::uint32_t>();
  p.instrument.enabled = fl.at("instrument").get<bool>();
  p.instrument.mode = fl.at("mode").get<std::string>() == "independent" ? instrument::Mode::independent
                                                                         : instrument::Mode::chained;
  p.instrument.skip_leaf = fl.at("skip_leaf").get<bool>();
  p.instrument.protect_caller_saved = fl.at("protect_caller_saved").get<bool>();
  return p;
}

// ---------------------------------------------------------------------------

double CorpusStats::mean_variables() const {
  if (functions.empty()) return 0.0;
  double s = 0;
  for (const auto& f : functions) s += f.variables;
  return s / static_cast<double>(functions.size());
}

double CorpusStats::mean_arguments() const {
  if (functions.empty()) return 0.0;
  double s = 0;
  for (const auto& f : functions) s += f.arguments;
  return s / static_cast<double>(functions.size());
}

double CorpusStats::fraction_below(std::uint32_t n) const {
  if (functions.empty()) return 0.0;
  const auto k = std::count_if(functions.begin(), functions.end(), [n](const FunctionStats& f) { return f.variables < n; });
  return static_cast<double>(k) / static_cast<double>(functions.size());
}

std::string CorpusStats::report() const {
  std::ostringstream os;
  for (const auto& e : errors) os << "error: " << e << '\n';
  if (functions.empty()) {
    os << "no functions\n";
    return os.str();
  }
  os << std::left << std::setw(28) << "file" << std::setw(20) << "function" << std::right << std::setw(6) << "vars"
     << std::setw(6) << "args" << '\n';
  for (const auto& f : functions)
    os << std::left << std::setw(28) << f.file << std::setw(20) << f.function << std::right << std::setw(6)
       << f.variables << std::setw(6) << f.arguments << '\n';
  std::uint32_t max_vars = 0;
  for (const auto& f : functions) max_vars = std::max(max_vars, f.variables);
  os << "\ncumulative distribution (variables per function)\n";
  std::size_t acc = 0;
  for (std::uint32_t v = 0; v <= max_vars; ++v) {
    const auto k = static_cast<std::size_t>(
        std::count_if(functions.begin(), functions.end(), [v](const FunctionStats& f) { return f.variables == v; }));
    if (!k) continue;
    acc += k;
    os << "  <= " << std::setw(3) << v << "  " << std::setw(4) << acc << "  " << std::fixed << std::setprecision(1)
       << 100.0 * static_cast<double>(acc) / static_cast<double>(functions.size()) << "%\n";
  }
  os << std::fixed << std::setprecision(2) << "\nfunctions " << functions.size() << "  mean variables "
     << mean_variables() << "  mean arguments " << mean_arguments() << "  below 16: " << std::setprecision(1)
     << 100.0 * fraction_below(16) << "%  below 32: " << 100.0 * fraction_below(32) << "%\n";
  return os.str();
}

std::string CorpusStats::summary_line() const {
  std::ostringstream os;
  os << "functions=" << functions.size() << std::fixed << std::setprecision(3) << " mean_variables=" << mean_variables()
     << " mean_arguments=" << mean_arguments() << " below16=" << fraction_below(16) << " below32=" << fraction_below(32)
     << " errors=" << errors.size();
  return os.str();
}

std::string CorpusStats::to_json() const {
  json j;
  j["functions"] = functions.size();
  j["mean_variables"] = mean_variables();
  j["mean_arguments"] = mean_arguments();
  j["fraction_below_16"] = fraction_below(16);
  j["fraction_below_32"] = fraction_below(32);
  auto& per = j["per_function"] = json::array();
  for (const auto& f : functions)
    per.push_back({{"file", f.file}, {"function", f.function}, {"variables", f.variables}, {"arguments", f.arguments}});
  j["errors"] = errors;
  return j.dump();
}

CorpusStats corpus_stats(const std::string& directory) {
  namespace fs = std::filesystem;
  CorpusStats st;
  std::vector<fs::path> files;
  std::error_code ec;
  for (fs::directory_iterator it(directory, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file() && it->path().extension() == ".ir") files.push_back(it->path());
  if (ec) st.errors.push_back(directory + ": " + ec.message());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::ifstream in(path);
    if (!in) {
      st.errors.push_back(path.filename().string() + ": cannot read");
      continue;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      const auto prog = ir::parse_program(ss.str());
      for (const auto& f : prog.functions) {
        FunctionStats fs_;
        fs_.file = path.filename().string();
        fs_.function = f.name;
        fs_.arguments = static_cast<std::uint32_t>(f.params.size());
        fs_.variables = static_cast<std::uint32_t>(f.params.size() + f.locals.size());
        st.functions.push_back(std::move(fs_));
      }
    } catch (const std::exception& e) {
      st.errors.push_back(path.filename().string() + ": " + e.what());
    }
  }
  return st;
}

}  // namespace regguard::pipeline
