#include "regguard/regalloc.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

namespace regguard::regalloc {

std::string reg_name(Reg r) {
  if (is_arg_reg(r)) return "a" + std::to_string(r - kArgBase);
  if (is_tmp_reg(r)) return "t" + std::to_string(r - kTmpBase);
  if (is_var_reg(r)) return "v" + std::to_string(r - kVarBase);
  switch (r) {
    case kTag: return "tag";
    case kBp: return "bp";
    case kLr: return "lr";
    case kSp: return "sp";
    case kKeyBank: return "key";
    default: return "r?" + std::to_string(r);
  }
}

std::optional<Reg> parse_reg(std::string_view name) {
  if (name == "tag") return kTag;
  if (name == "bp") return kBp;
  if (name == "lr" || name == "ret") return kLr;
  if (name == "sp") return kSp;
  if (name.size() < 2) return std::nullopt;
  const char bank = name[0];
  unsigned n = 0;
  for (char c : name.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    n = n * 10 + static_cast<unsigned>(c - '0');
    if (n > 64) return std::nullopt;
  }
  if (bank == 'a' && n < kMaxArgRegs) return arg_reg(n);
  if (bank == 't' && n < kMaxTmpRegs) return tmp_reg(n);
  if (bank == 'v' && n < kMaxVarRegs) return var_reg(n);
  return std::nullopt;
}

void RegisterFileConfig::validate() const {
  if (n_var_regs == 0) throw ConfigError("at least one variable register is required");
  if (n_var_regs > kMaxVarRegs) throw ConfigError("at most 32 variable registers are supported");
  if (n_arg_regs == 0 || n_arg_regs > kMaxArgRegs) throw ConfigError("argument register count must be 1..8");
  if (n_tmp_regs < kMinTmpRegs || n_tmp_regs > kMaxTmpRegs)
    throw ConfigError("temporary register count must be 6..16");
  const std::set<Reg> reserved{tag, sp, bp, link};
  if (reserved.size() != 4 || reserved.count(key)) throw ConfigError("reserved registers must be distinct");
}

std::vector<Reg> Allocation::used_var_regs() const {
  std::set<Reg> regs;
  for (const auto& [id, loc] : assignment)
    if (loc.is_reg() && is_var_reg(loc.reg)) regs.insert(loc.reg);
  return {regs.begin(), regs.end()};
}

std::uint32_t max_pressure(const std::vector<analysis::LiveRange>& ranges,
                           const std::vector<std::uint32_t>& subset) {
  std::map<std::uint32_t, int> delta;
  for (auto id : subset)
    for (const auto& s : ranges[id].segments) {
      ++delta[s.begin];
      --delta[s.end];
    }
  int cur = 0, best = 0;
  for (const auto& [pt, d] : delta) {
    cur += d;
    best = std::max(best, cur);
  }
  return static_cast<std::uint32_t>(best);
}

namespace {

// Lowest variable register not held by an assigned neighbour, or n when none.
unsigned lowest_free(const analysis::InterferenceGraph& g, std::uint32_t id,
                     const std::map<std::uint32_t, Location>& assigned, unsigned n) {
  std::vector<bool> taken(n, false);
  for (auto nb : g.neighbours(id)) {
    auto it = assigned.find(nb);
    if (it == assigned.end() || !it->second.is_reg() || !is_var_reg(it->second.reg)) continue;
    const unsigned idx = it->second.reg - kVarBase;
    if (idx < n) taken[idx] = true;
  }
  for (unsigned i = 0; i < n; ++i)
    if (!taken[i]) return i;
  return n;
}

// Depth-first colouring of `nodes` (already in rank order) with n colours.
std::optional<std::map<std::uint32_t, Location>> exact_colouring(const analysis::InterferenceGraph& g,
                                                                 const std::vector<std::uint32_t>& nodes,
                                                                 const std::map<std::uint32_t, Location>& fixed,
                                                                 unsigned n) {
  std::map<std::uint32_t, Location> cur = fixed;
  std::size_t budget = 200000;
  std::function<bool(std::size_t)> dfs = [&](std::size_t i) {
    if (i == nodes.size()) return true;
    if (budget-- == 0) return false;
    const auto id = nodes[i];
    std::vector<bool> taken(n, false);
    for (auto nb : g.neighbours(id)) {
      auto it = cur.find(nb);
      if (it != cur.end() && it->second.is_reg() && is_var_reg(it->second.reg)) {
        const unsigned idx = it->second.reg - kVarBase;
        if (idx < n) taken[idx] = true;
      }
    }
    for (unsigned c = 0; c < n; ++c) {
      if (taken[c]) continue;
      cur[id] = Location::in_reg(var_reg(c));
      if (dfs(i + 1)) return true;
      cur.erase(id);
    }
    return false;
  };
  if (!dfs(0)) return std::nullopt;
  return cur;
}

}  // namespace

Allocation allocate(const ir::Function& f, const std::vector<analysis::LiveRange>& ranges,
                    const analysis::InterferenceGraph& graph, const std::vector<std::uint32_t>& order,
                    const RegisterFileConfig& cfg) {
  cfg.validate();
  if (f.params.size() > cfg.n_arg_regs)
    throw ConfigError("function '" + f.name + "' has more parameters than argument registers");

  const auto du = analysis::classify_defs_uses(f);
  const auto scores = scoring::score_function(f, du);

  Allocation out;
  std::map<std::uint32_t, Location> fixed;
  for (const auto& r : ranges) {
    for (std::size_t i = 0; i < f.params.size(); ++i)
      if (f.params[i].name == r.variable) fixed[r.id] = Location::in_reg(arg_reg(static_cast<unsigned>(i)));
    if (auto it = scores.find(r.variable); it != scores.end()) out.score_of[r.id] = it->second;
  }

  auto greedy = [&](std::map<std::uint32_t, Location> assigned) {
    std::vector<std::uint32_t> spilled;
    for (auto id : order) {
      if (assigned.count(id)) continue;
      const unsigned c = lowest_free(graph, id, assigned, cfg.n_var_regs);
      if (c < cfg.n_var_regs)
        assigned[id] = Location::in_reg(var_reg(c));
      else
        spilled.push_back(id);
    }
    return std::make_pair(assigned, spilled);
  };

  auto is_critical = [&](std::uint32_t id) {
    auto it = out.score_of.find(id);
    return it != out.score_of.end() && it->second.value >= cfg.warning_threshold;
  };

  auto [assigned, spilled] = greedy(fixed);

  // Greedy order can be unlucky on non-interval interference; when the
  // critical ranges fit by pressure, look for an exact colouring of them.
  const bool critical_spill = std::any_of(spilled.begin(), spilled.end(), is_critical);
  if (critical_spill) {
    std::vector<std::uint32_t> critical;
    for (auto id : order)
      if (is_critical(id)) critical.push_back(id);
    if (max_pressure(ranges, critical) <= cfg.n_var_regs) {
      if (auto col = exact_colouring(graph, critical, fixed, cfg.n_var_regs)) {
        std::tie(assigned, spilled) = greedy(*col);
        out.used_exact_critical = true;
      }
    }
  }

  // Spill slots: lowest index not held by an interfering spilled range.
  std::map<std::uint32_t, std::vector<std::uint32_t>> slot_members;
  for (auto id : spilled) {
    std::uint32_t s = 0;
    for (;; ++s) {
      const auto& members = slot_members[s];
      const bool clash = std::any_of(members.begin(), members.end(),
                                     [&](std::uint32_t m) { return graph.interferes(m, id); });
      if (!clash) break;
    }
    slot_members[s].push_back(id);
    assigned[id] = Location::spilled(s);
    out.spill_slots = std::max(out.spill_slots, s + 1);
  }

  for (auto id : spilled) {
    if (!is_critical(id)) continue;
    std::ostringstream why;
    why << "critical range #" << id << " (score " << out.score_of.at(id).value << ") left in memory";
    out.warnings.push_back({ranges[id].variable, why.str()});
  }
  out.assignment = std::move(assigned);
  return out;
}

const SaveSlot* FrameLayout::find(SlotKind k, Reg r) const {
  for (const auto& s : saves)
    if (s.kind == k && (k != SlotKind::var_reg || s.reg == r)) return &s;
  return nullptr;
}

std::int64_t FrameLayout::offset_of(SlotKind k, Reg r) const {
  const SaveSlot* s = find(k, r);
  if (!s) throw std::logic_error("no such save slot");
  return s->offset;
}

const PinnedSlot* FrameLayout::find_pinned(const std::string& var) const {
  for (const auto& p : pinned)
    if (p.variable == var) return &p;
  return nullptr;
}

FrameLayout frame_layout(const ir::Function& f, const Allocation& alloc, const RegisterFileConfig& cfg) {
  FrameLayout fl;
  const auto vars = alloc.used_var_regs();
  const auto pinned_set = analysis::pinned_variables(f);
  std::vector<std::pair<std::string, std::uint32_t>> pinned;
  for (const auto& v : f.locals)
    if (pinned_set.count(v.name)) pinned.emplace_back(v.name, v.is_buffer() ? (v.buffer_bytes + 7u) / 8u * 8u : 8u);

  std::uint32_t size = 8 * (3 + static_cast<std::uint32_t>(vars.size()) + alloc.spill_slots);
  for (const auto& p : pinned) size += p.second;
  fl.size = size;

  std::int64_t cur = size;
  auto next = [&](std::int64_t bytes) { return cur -= bytes; };
  fl.saves.push_back({SlotKind::tag, cfg.tag, next(8)});
  fl.saves.push_back({SlotKind::ret, cfg.link, next(8)});
  fl.saves.push_back({SlotKind::bp, cfg.bp, next(8)});
  for (auto r : vars) fl.saves.push_back({SlotKind::var_reg, r, next(8)});
  for (std::uint32_t s = 0; s < alloc.spill_slots; ++s) fl.spill_offsets.push_back(next(8));
  for (const auto& [name, bytes] : pinned) fl.pinned.push_back({name, next(bytes), bytes});
  return fl;
}

std::string dump_alloc(const std::vector<analysis::LiveRange>& ranges, const Allocation& alloc) {
  std::ostringstream os;
  for (const auto& r : ranges) {
    os << '#' << r.id << ' ' << r.variable << " -> ";
    auto it = alloc.assignment.find(r.id);
    if (it == alloc.assignment.end())
      os << "none";
    else if (it->second.is_reg())
      os << reg_name(it->second.reg);
    else
      os << "spill " << it->second.slot;
    os << '\n';
  }
  for (const auto& w : alloc.warnings) os << "warning: " << w.variable << ": " << w.reason << '\n';
  return os.str();
}

}  // namespace regguard::regalloc
