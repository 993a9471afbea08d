#include "regguard/analysis.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace regguard::analysis {

std::string_view to_string(DefKind k) {
  switch (k) {
    case DefKind::immediate: return "immediate";
    case DefKind::copy: return "copy";
    case DefKind::external: return "external";
    case DefKind::call_result: return "call_result";
    case DefKind::load_result: return "load_result";
    case DefKind::arith_result: return "arith_result";
    case DefKind::address_result: return "address_result";
    case DefKind::entry: return "entry";
  }
  return "?";
}

std::string_view to_string(UseKind k) {
  switch (k) {
    case UseKind::branch_cond: return "branch_cond";
    case UseKind::comparison_operand: return "comparison_operand";
    case UseKind::call_target: return "call_target";
    case UseKind::call_arg: return "call_arg";
    case UseKind::address_taken: return "address_taken";
    case UseKind::store_source: return "store_source";
    case UseKind::plain: return "plain";
  }
  return "?";
}

bool VarDefUse::has_def(DefKind k) const {
  return std::any_of(defs.begin(), defs.end(), [k](const DefSite& d) { return d.kind == k; });
}

bool VarDefUse::has_use(UseKind k) const {
  return std::any_of(uses.begin(), uses.end(), [k](const UseSite& u) { return u.kind == k; });
}

// ---------------------------------------------------------------------------
// def/use classification

DefUseInfo classify_defs_uses(const ir::Function& f) {
  DefUseInfo du;
  for (const auto& v : f.variables()) du.vars[v.name];
  for (const auto& p : f.params) du.vars[p.name].defs.push_back({{0, 0}, DefKind::entry});

  for (std::uint32_t b = 0; b < f.blocks.size(); ++b) {
    const auto& instrs = f.blocks[b].instructions;
    for (std::uint32_t i = 0; i < instrs.size(); ++i) {
      const ProgramPoint pt{b, i};
      auto def = [&](const std::string& v, DefKind k) { du.vars[v].defs.push_back({pt, k}); };
      auto use = [&](const std::string& v, UseKind k) { du.vars[v].uses.push_back({pt, k}); };
      std::visit(
          [&](const auto& in) {
            using T = std::decay_t<decltype(in)>;
            if constexpr (std::is_same_v<T, ir::AssignImm>) {
              def(in.dst, DefKind::immediate);
            } else if constexpr (std::is_same_v<T, ir::AssignCopy>) {
              use(in.src, UseKind::plain);
              def(in.dst, DefKind::copy);
            } else if constexpr (std::is_same_v<T, ir::BinaryOp>) {
              use(in.a, UseKind::plain);
              use(in.b, UseKind::plain);
              def(in.dst, DefKind::arith_result);
            } else if constexpr (std::is_same_v<T, ir::Compare>) {
              use(in.a, UseKind::comparison_operand);
              use(in.b, UseKind::comparison_operand);
              def(in.dst, DefKind::arith_result);
            } else if constexpr (std::is_same_v<T, ir::BranchCond>) {
              use(in.cond, UseKind::branch_cond);
            } else if constexpr (std::is_same_v<T, ir::Load>) {
              use(in.addr, UseKind::plain);
              def(in.dst, DefKind::load_result);
            } else if constexpr (std::is_same_v<T, ir::Store>) {
              use(in.addr, UseKind::plain);
              use(in.src, UseKind::store_source);
            } else if constexpr (std::is_same_v<T, ir::AddressOf>) {
              if (!in.of_function) use(in.target, UseKind::address_taken);
              def(in.dst, DefKind::address_result);
            } else if constexpr (std::is_same_v<T, ir::CallDirect>) {
              for (const auto& a : in.args) use(a, UseKind::call_arg);
              if (in.dst) def(*in.dst, DefKind::call_result);
            } else if constexpr (std::is_same_v<T, ir::CallIndirect>) {
              use(in.pointer, UseKind::call_target);
              for (const auto& a : in.args) use(a, UseKind::call_arg);
              if (in.dst) def(*in.dst, DefKind::call_result);
            } else if constexpr (std::is_same_v<T, ir::ReadExternal>) {
              def(in.dst, DefKind::external);
            } else if constexpr (std::is_same_v<T, ir::Return>) {
              if (in.value) use(*in.value, UseKind::plain);
            }
          },
          instrs[i].form);
    }
  }
  return du;
}

std::set<std::string> pinned_variables(const ir::Function& f) {
  std::set<std::string> pinned;
  for (const auto& v : f.locals)
    if (v.is_buffer()) pinned.insert(v.name);
  for (const auto& b : f.blocks)
    for (const auto& i : b.instructions)
      if (const auto* a = std::get_if<ir::AddressOf>(&i.form); a && !a->of_function)
        pinned.insert(a->target);
  return pinned;
}

// ---------------------------------------------------------------------------
// points

PointIndex::PointIndex(const ir::Function& f) {
  block_start_.reserve(f.blocks.size());
  for (const auto& b : f.blocks) {
    block_start_.push_back(total_);
    total_ += static_cast<std::uint32_t>(b.instructions.size());
  }
}

ProgramPoint PointIndex::point(std::uint32_t linear) const {
  auto it = std::upper_bound(block_start_.begin(), block_start_.end(), linear);
  const auto b = static_cast<std::uint32_t>(std::distance(block_start_.begin(), it) - 1);
  return {b, linear - block_start_[b]};
}

std::vector<std::uint32_t> block_successors(const ir::Function& f, std::uint32_t b) {
  std::vector<std::uint32_t> out;
  for (const auto& label : f.blocks[b].instructions.back().successors())
    out.push_back(static_cast<std::uint32_t>(f.block_index(label)));
  return out;
}

// ---------------------------------------------------------------------------
// liveness

bool Liveness::live_before(ProgramPoint p, const std::string& var) const {
  auto it = id.find(var);
  return it != id.end() && live_in[p.block][p.index][it->second];
}

bool Liveness::live_after(ProgramPoint p, const std::string& var) const {
  auto it = id.find(var);
  return it != id.end() && live_out[p.block][p.index][it->second];
}

std::vector<std::string> Liveness::names(const std::vector<bool>& set) const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (set[i]) out.push_back(tracked[i]);
  return out;
}

namespace {

using Bits = std::vector<bool>;

bool merge_into(Bits& dst, const Bits& src) {
  bool changed = false;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (src[i] && !dst[i]) {
      dst[i] = true;
      changed = true;
    }
  }
  return changed;
}

}  // namespace

Liveness compute_liveness(const ir::Function& f) {
  Liveness lv;
  const auto pinned = pinned_variables(f);
  for (const auto& v : f.variables()) {
    if (pinned.count(v.name)) continue;
    lv.id[v.name] = lv.tracked.size();
    lv.tracked.push_back(v.name);
  }
  const std::size_t n = lv.tracked.size();
  const std::size_t nb = f.blocks.size();

  auto tracked_id = [&](const std::string& name) -> long {
    auto it = lv.id.find(name);
    return it == lv.id.end() ? -1 : static_cast<long>(it->second);
  };

  auto transfer = [&](const ir::Instruction& ins, const Bits& out) {
    Bits in = out;
    if (auto d = ins.def()) {
      if (long id = tracked_id(*d); id >= 0) in[id] = false;
    }
    for (const auto& u : ins.value_uses())
      if (long id = tracked_id(u); id >= 0) in[id] = true;
    return in;
  };

  std::vector<std::vector<std::uint32_t>> succ(nb);
  for (std::uint32_t b = 0; b < nb; ++b) succ[b] = block_successors(f, b);

  std::vector<Bits> block_in(nb, Bits(n, false));
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t bi = nb; bi-- > 0;) {
      Bits live(n, false);
      for (auto s : succ[bi]) merge_into(live, block_in[s]);
      const auto& instrs = f.blocks[bi].instructions;
      for (std::size_t i = instrs.size(); i-- > 0;) live = transfer(instrs[i], live);
      if (live != block_in[bi]) {
        block_in[bi] = std::move(live);
        changed = true;
      }
    }
  }

  lv.live_in.resize(nb);
  lv.live_out.resize(nb);
  for (std::size_t bi = 0; bi < nb; ++bi) {
    const auto& instrs = f.blocks[bi].instructions;
    lv.live_in[bi].resize(instrs.size());
    lv.live_out[bi].resize(instrs.size());
    Bits live(n, false);
    for (auto s : succ[bi]) merge_into(live, block_in[s]);
    for (std::size_t i = instrs.size(); i-- > 0;) {
      lv.live_out[bi][i] = live;
      live = transfer(instrs[i], live);
      lv.live_in[bi][i] = live;
    }
  }
  return lv;
}

// ---------------------------------------------------------------------------
// live ranges (def-use webs)

bool LiveRange::covers(std::uint32_t s) const {
  auto it = std::upper_bound(segments.begin(), segments.end(), s,
                             [](std::uint32_t v, const Segment& seg) { return v < seg.begin; });
  if (it == segments.begin()) return false;
  --it;
  return s < it->end;
}

bool LiveRange::overlaps(const LiveRange& o) const {
  std::size_t i = 0, j = 0;
  while (i < segments.size() && j < o.segments.size()) {
    const Segment& a = segments[i];
    const Segment& b = o.segments[j];
    if (a.begin < b.end && b.begin < a.end) return true;
    (a.end <= b.end) ? ++i : ++j;
  }
  return false;
}

namespace {

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::vector<Segment> to_segments(std::vector<std::uint32_t> slots) {
  std::sort(slots.begin(), slots.end());
  slots.erase(std::unique(slots.begin(), slots.end()), slots.end());
  std::vector<Segment> segs;
  for (auto s : slots) {
    if (!segs.empty() && segs.back().end == s)
      segs.back().end = s + 1;
    else
      segs.push_back({s, s + 1});
  }
  return segs;
}

}  // namespace

std::vector<LiveRange> build_live_ranges(const ir::Function& f, const Liveness& live,
                                         const DefUseInfo& du) {
  (void)du;  // webs are rebuilt from reaching definitions; du supplies no extra facts
  const PointIndex pts(f);
  const std::size_t nvars = live.tracked.size();
  const std::size_t nb = f.blocks.size();

  // Definition table: one entry definition per tracked variable, then one per
  // defining instruction. kEntry marks the pseudo-definition site.
  constexpr std::uint32_t kEntry = UINT32_MAX;
  struct Def {
    std::size_t var;
    std::uint32_t linear;
  };
  std::vector<Def> defs;
  std::vector<std::vector<std::size_t>> defs_of_var(nvars);
  std::vector<long> def_at(pts.size(), -1);  // linear -> def id
  for (std::size_t v = 0; v < nvars; ++v) {
    defs_of_var[v].push_back(defs.size());
    defs.push_back({v, kEntry});
  }
  for (std::uint32_t b = 0; b < nb; ++b) {
    const auto& instrs = f.blocks[b].instructions;
    for (std::uint32_t i = 0; i < instrs.size(); ++i) {
      if (auto d = instrs[i].def(); d && live.id.count(*d)) {
        const std::size_t v = live.id.at(*d);
        const std::uint32_t lin = pts.linear({b, i});
        def_at[lin] = static_cast<long>(defs.size());
        defs_of_var[v].push_back(defs.size());
        defs.push_back({v, lin});
      }
    }
  }
  const std::size_t nd = defs.size();

  // Reaching definitions (forward, may).
  auto step = [&](Bits& reach, std::uint32_t lin) {
    if (def_at[lin] < 0) return;
    const Def& d = defs[def_at[lin]];
    for (auto id : defs_of_var[d.var]) reach[id] = false;
    reach[def_at[lin]] = true;
  };
  std::vector<std::vector<std::uint32_t>> preds(nb);
  for (std::uint32_t b = 0; b < nb; ++b)
    for (auto s : block_successors(f, b)) preds[s].push_back(b);

  std::vector<Bits> block_out(nb, Bits(nd, false));
  Bits entry_reach(nd, false);
  for (std::size_t v = 0; v < nvars; ++v) entry_reach[defs_of_var[v][0]] = true;
  auto block_entry = [&](std::uint32_t b) {
    Bits in = b == 0 ? entry_reach : Bits(nd, false);
    for (auto p : preds[b]) merge_into(in, block_out[p]);
    return in;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::uint32_t b = 0; b < nb; ++b) {
      Bits reach = block_entry(b);
      for (std::uint32_t i = 0; i < f.blocks[b].instructions.size(); ++i) step(reach, pts.linear({b, i}));
      if (reach != block_out[b]) {
        block_out[b] = std::move(reach);
        changed = true;
      }
    }
  }

  // Webs: unite every definition reaching a common use; record per-point
  // reaching sets for the slot assignment below.
  UnionFind uf(nd);
  std::vector<std::uint32_t> uses_of_def(nd, 0);
  std::vector<Bits> reach_in(pts.size());
  for (std::uint32_t b = 0; b < nb; ++b) {
    Bits reach = block_entry(b);
    const auto& instrs = f.blocks[b].instructions;
    for (std::uint32_t i = 0; i < instrs.size(); ++i) {
      const std::uint32_t lin = pts.linear({b, i});
      reach_in[lin] = reach;
      for (const auto& u : instrs[i].value_uses()) {
        auto it = live.id.find(u);
        if (it == live.id.end()) continue;
        long first = -1;
        for (auto id : defs_of_var[it->second]) {
          if (!reach[id]) continue;
          if (first < 0) {
            first = static_cast<long>(id);
            ++uses_of_def[id];
          } else {
            uf.unite(static_cast<std::size_t>(first), id);
          }
        }
      }
      step(reach, lin);
    }
  }

  auto web_of_reaching = [&](std::size_t var, const Bits& reach) -> long {
    for (auto id : defs_of_var[var])
      if (reach[id]) return static_cast<long>(uf.find(id));
    return -1;  // unreachable code
  };

  std::map<std::size_t, std::vector<std::uint32_t>> slots;  // web root -> sub-points
  for (std::uint32_t b = 0; b < nb; ++b) {
    const auto& instrs = f.blocks[b].instructions;
    for (std::uint32_t i = 0; i < instrs.size(); ++i) {
      const std::uint32_t lin = pts.linear({b, i});
      for (std::size_t v = 0; v < nvars; ++v) {
        if (live.live_in[b][i][v]) {
          if (long w = web_of_reaching(v, reach_in[lin]); w >= 0) slots[w].push_back(PointIndex::read_slot(lin));
        }
        const bool defined_here = def_at[lin] >= 0 && defs[def_at[lin]].var == v;
        if (defined_here) {
          slots[uf.find(def_at[lin])].push_back(PointIndex::write_slot(lin));
        } else if (live.live_out[b][i][v]) {
          if (long w = web_of_reaching(v, reach_in[lin]); w >= 0) slots[w].push_back(PointIndex::write_slot(lin));
        }
      }
    }
  }

  std::vector<LiveRange> ranges;
  for (auto& [root, s] : slots) {
    LiveRange r;
    r.variable = live.tracked[defs[root].var];
    r.segments = to_segments(std::move(s));
    for (std::size_t id = 0; id < nd; ++id) {
      if (uf.find(id) != root) continue;
      r.use_count += uses_of_def[id];
      if (defs[id].linear == kEntry)
        r.entry_def = true;
      else
        r.defs.push_back(pts.point(defs[id].linear));
    }
    std::sort(r.defs.begin(), r.defs.end());
    ranges.push_back(std::move(r));
  }
  std::sort(ranges.begin(), ranges.end(), [&](const LiveRange& a, const LiveRange& b) {
    if (a.first_slot() != b.first_slot()) return a.first_slot() < b.first_slot();
    return live.id.at(a.variable) < live.id.at(b.variable);
  });
  for (std::uint32_t i = 0; i < ranges.size(); ++i) ranges[i].id = i;
  return ranges;
}

// ---------------------------------------------------------------------------
// interference

bool InterferenceGraph::interferes(std::uint32_t a, std::uint32_t b) const {
  return edges.count({std::min(a, b), std::max(a, b)}) != 0;
}

std::vector<std::uint32_t> InterferenceGraph::neighbours(std::uint32_t n) const {
  std::vector<std::uint32_t> out;
  for (const auto& [a, b] : edges) {
    if (a == n) out.push_back(b);
    if (b == n) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

InterferenceGraph build_interference(const std::vector<LiveRange>& ranges) {
  InterferenceGraph g;
  for (const auto& r : ranges) g.nodes.push_back(r.id);
  for (std::size_t i = 0; i < ranges.size(); ++i)
    for (std::size_t j = i + 1; j < ranges.size(); ++j)
      if (ranges[i].overlaps(ranges[j]))
        g.edges.insert({std::min(ranges[i].id, ranges[j].id), std::max(ranges[i].id, ranges[j].id)});
  return g;
}

std::string dump_liveness(const ir::Function& f, const Liveness& live) {
  std::ostringstream os;
  auto set_text = [&](const Bits& bits) {
    std::string s = "{";
    bool first = true;
    for (const auto& n : live.names(bits)) {
      s += (first ? "" : ",") + n;
      first = false;
    }
    return s + "}";
  };
  for (std::size_t b = 0; b < f.blocks.size(); ++b) {
    const auto& instrs = f.blocks[b].instructions;
    for (std::size_t i = 0; i < instrs.size(); ++i) {
      os << f.name << ' ' << f.blocks[b].label << ':' << i << " live_in=" << set_text(live.live_in[b][i])
         << " live_out=" << set_text(live.live_out[b][i]) << "  " << ir::format_instruction(instrs[i])
         << '\n';
    }
  }
  return os.str();
}

}  // namespace regguard::analysis
