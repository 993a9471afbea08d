#include "regguard/instrument.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>

namespace regguard::instrument {

using namespace machine;
using analysis::LiveRange;
using analysis::PointIndex;
using regalloc::kBp;
using regalloc::kCallResult;
using regalloc::kCycleBreak;
using regalloc::kLr;
using regalloc::kNoReg;
using regalloc::kRecomputed;
using regalloc::kRefTag;
using regalloc::kScratchA;
using regalloc::kScratchB;
using regalloc::kSp;
using regalloc::kTag;
using regalloc::Location;
using regalloc::SlotKind;

std::string_view to_string(Mode m) { return m == Mode::chained ? "chained" : "independent"; }

namespace {

MachineInstr make(Op op) {
  MachineInstr m;
  m.op = op;
  return m;
}
MachineInstr mov_imm(Reg rd, std::int64_t v) {
  auto m = make(Op::mov_imm);
  m.rd = rd;
  m.imm = v;
  return m;
}
MachineInstr mov(Reg rd, Reg ra) {
  auto m = make(Op::mov_reg);
  m.rd = rd;
  m.ra = ra;
  return m;
}
MachineInstr load(Reg rd, Reg base, std::int64_t off) {
  auto m = make(Op::load);
  m.rd = rd;
  m.ra = base;
  m.imm = off;
  return m;
}
MachineInstr store(Reg src, Reg base, std::int64_t off) {
  auto m = make(Op::store);
  m.rb = src;
  m.ra = base;
  m.imm = off;
  return m;
}
MachineInstr addi(Reg rd, Reg ra, std::int64_t v) {
  auto m = make(Op::add_imm);
  m.rd = rd;
  m.ra = ra;
  m.imm = v;
  return m;
}
MachineInstr compress(Reg r) {
  auto m = make(Op::mac_compress);
  m.ra = r;
  return m;
}
MachineInstr compress_imm(std::uint64_t v) {
  auto m = make(Op::mac_compress);
  m.imm = static_cast<std::int64_t>(v);
  return m;
}
MachineInstr finalize(Reg rd) {
  auto m = make(Op::mac_finalize);
  m.rd = rd;
  return m;
}
MachineInstr check(Reg a, Reg b) {
  auto m = make(Op::mac_check);
  m.ra = a;
  m.rb = b;
  return m;
}
MachineInstr annotate(MachineInstr m, Role role, Slot slot, bool covered, std::string comment = {}) {
  m.role = role;
  m.slot = slot;
  m.mac_covered = covered;
  m.comment = std::move(comment);
  return m;
}

Slot slot_of(SlotKind k) {
  switch (k) {
    case SlotKind::tag: return Slot::tag;
    case SlotKind::ret: return Slot::ret;
    case SlotKind::bp: return Slot::bp;
    case SlotKind::var_reg: return Slot::var_reg;
  }
  return Slot::none;
}

struct Move {
  Reg dst;
  Reg src;
  std::optional<VarRef> ref;
};

// Emits a sequence of register moves equivalent to performing `moves` in
// parallel. Destinations are distinct.
void sequentialize(std::vector<Move> moves, std::vector<MachineInstr>& out) {
  moves.erase(std::remove_if(moves.begin(), moves.end(), [](const Move& m) { return m.dst == m.src; }), moves.end());
  while (!moves.empty()) {
    bool progressed = false;
    for (std::size_t i = 0; i < moves.size(); ++i) {
      const Reg d = moves[i].dst;
      const bool blocked = std::any_of(moves.begin(), moves.end(), [&](const Move& o) { return o.src == d; });
      if (blocked) continue;
      auto m = mov(moves[i].dst, moves[i].src);
      if (moves[i].ref) m.var_reads.push_back(*moves[i].ref);
      out.push_back(std::move(m));
      moves.erase(moves.begin() + static_cast<std::ptrdiff_t>(i));
      progressed = true;
      break;
    }
    if (progressed) continue;
    // Every destination is still needed as a source: a cycle. Park one
    // source in the cycle-break register.
    const Reg parked = moves.front().src;
    auto m = mov(kCycleBreak, parked);
    for (auto& mv : moves) {
      if (mv.src != parked) continue;
      if (mv.ref && m.var_reads.empty()) m.var_reads.push_back(*mv.ref);
      mv.src = kCycleBreak;
      mv.ref.reset();
    }
    out.push_back(std::move(m));
  }
}

class Lowerer {
 public:
  Lowerer(const FunctionPlan& plan, const regalloc::RegisterFileConfig& rf, const InstrumentConfig& cfg)
      : plan_(plan), f_(*plan.function), rf_(rf), cfg_(cfg), pts_(f_), pinned_(analysis::pinned_variables(f_)) {
    for (const auto& r : plan_.ranges) ranges_of_[r.variable].push_back(&r);
    mf_.name = f_.name;
    mf_.fid = function_id(f_.name);
    mf_.leaf = f_.is_leaf();
    mf_.instrumented = cfg_.enabled && !(cfg_.skip_leaf && mf_.leaf);
    mf_.layout = plan_.layout;
    mf_.param_count = static_cast<std::uint32_t>(f_.params.size());
    for (const auto& v : f_.variables()) mf_.variables.push_back(v.name);
    for (const auto& r : plan_.ranges) {
      RangeInfo ri;
      ri.id = r.id;
      ri.variable = r.variable;
      ri.segments = r.segments;
      ri.loc = location(r);
      if (!ri.loc.is_reg()) ri.spill_offset = plan_.layout.spill_offsets.at(ri.loc.slot);
      mf_.ranges.push_back(std::move(ri));
    }
  }

  MachineFunction run() {
    prologue();
    mf_.body_start = static_cast<std::int32_t>(mf_.code.size());
    body();
    return std::move(mf_);
  }

 private:
  const FunctionPlan& plan_;
  const ir::Function& f_;
  const regalloc::RegisterFileConfig& rf_;
  const InstrumentConfig& cfg_;
  PointIndex pts_;
  std::set<std::string> pinned_;
  std::map<std::string, std::vector<const LiveRange*>> ranges_of_;
  MachineFunction mf_;
  std::int32_t cur_ = -1;
  std::vector<VarRef> pending_reads_;

  bool chained() const { return cfg_.mode == Mode::chained; }

  MachineInstr& emit(MachineInstr m) {
    m.src_linear = cur_;
    if (!pending_reads_.empty()) {
      m.var_reads.insert(m.var_reads.end(), pending_reads_.begin(), pending_reads_.end());
      pending_reads_.clear();
    }
    mf_.code.push_back(std::move(m));
    return mf_.code.back();
  }

  Location location(const LiveRange& r) const {
    auto it = plan_.alloc.assignment.find(r.id);
    if (it == plan_.alloc.assignment.end())
      throw LoweringError("range #" + std::to_string(r.id) + " of '" + r.variable + "' in '" + f_.name +
                          "' has no allocation");
    return it->second;
  }

  const LiveRange* range_at(const std::string& var, std::uint32_t slot) const {
    auto it = ranges_of_.find(var);
    if (it == ranges_of_.end()) return nullptr;
    for (const auto* r : it->second)
      if (r->covers(slot)) return r;
    return nullptr;
  }

  const LiveRange& need_range(const std::string& var, std::uint32_t slot) const {
    const LiveRange* r = range_at(var, slot);
    if (!r)
      throw LoweringError("no live range of '" + var + "' at sub-point " + std::to_string(slot) + " in '" +
                          f_.name + "'");
    return *r;
  }

  std::int64_t pinned_offset(const std::string& var) const { return plan_.layout.find_pinned(var)->offset; }

  // Register holding the value of `var` read at the current point.
  Reg use(const std::string& var, Reg scratch) {
    if (pinned_.count(var)) {
      emit(load(scratch, kBp, pinned_offset(var)));
      return scratch;
    }
    const LiveRange& r = need_range(var, PointIndex::read_slot(static_cast<std::uint32_t>(cur_)));
    const Location loc = location(r);
    if (loc.is_reg()) {
      pending_reads_.push_back({loc.reg, r.id});
      return loc.reg;
    }
    emit(load(scratch, kBp, plan_.layout.spill_offsets.at(loc.slot)));
    return scratch;
  }

  struct Dest {
    Reg reg = kScratchA;
    std::optional<std::int64_t> spill_to;
    std::optional<VarRef> ref;
  };

  Dest def(const std::string& var) {
    Dest d;
    if (pinned_.count(var)) {
      d.spill_to = pinned_offset(var);
      return d;
    }
    const LiveRange& r = need_range(var, PointIndex::write_slot(static_cast<std::uint32_t>(cur_)));
    const Location loc = location(r);
    if (loc.is_reg()) {
      d.reg = loc.reg;
      d.ref = VarRef{loc.reg, r.id};
    } else {
      d.spill_to = plan_.layout.spill_offsets.at(loc.slot);
    }
    return d;
  }

  void emit_def(MachineInstr m, const Dest& d) {
    m.rd = d.reg;
    if (d.ref) m.var_writes.push_back(*d.ref);
    emit(std::move(m));
    if (d.spill_to) emit(store(kScratchA, kBp, *d.spill_to));
  }

  void prologue() {
    const auto& L = plan_.layout;
    const bool mac = mf_.instrumented;
    emit(addi(kSp, kSp, -static_cast<std::int64_t>(L.size))).comment = "frame " + std::to_string(L.size);
    if (mac) {
      emit(make(Op::mac_init));
      if (!chained()) {
        emit(compress(kSp));
        emit(compress_imm(mf_.fid)).comment = "function id";
      }
    }
    for (const auto& s : L.saves) {
      if (s.kind == SlotKind::tag) {
        if (mac && chained()) {
          emit(annotate(store(s.reg, kSp, s.offset), Role::save, Slot::tag, true, "previous tag"));
          emit(compress(s.reg));
        }
        continue;
      }
      emit(annotate(store(s.reg, kSp, s.offset), Role::save, slot_of(s.kind), mac));
      if (mac) emit(compress(s.reg));
    }
    if (mac) {
      if (chained()) {
        emit(finalize(kTag));
      } else {
        emit(finalize(kRefTag));
        emit(annotate(store(kRefTag, kSp, L.offset_of(SlotKind::tag)), Role::save, Slot::tag, true, "frame tag"));
      }
    }
    auto& setbp = emit(mov(kBp, kSp));
    for (const auto& r : plan_.ranges) {
      if (!r.entry_def) continue;
      const auto loc = location(r);
      if (loc.is_reg() && regalloc::is_arg_reg(loc.reg)) setbp.var_writes.push_back({loc.reg, r.id});
    }

    // Parameters whose address is taken live in their frame slot.
    for (std::size_t i = 0; i < f_.params.size(); ++i)
      if (pinned_.count(f_.params[i].name))
        emit(store(regalloc::arg_reg(static_cast<unsigned>(i)), kBp, pinned_offset(f_.params[i].name)));

    // Locals read before any write start out as zero.
    for (const auto& r : plan_.ranges) {
      if (!r.entry_def || f_.find_variable(r.variable)->is_param) continue;
      const auto loc = location(r);
      if (loc.is_reg()) {
        auto m = mov_imm(loc.reg, 0);
        m.var_writes.push_back({loc.reg, r.id});
        emit(std::move(m));
      } else {
        emit(mov_imm(kScratchA, 0));
        emit(store(kScratchA, kBp, L.spill_offsets.at(loc.slot)));
      }
    }
    bool zero_loaded = false;
    for (const auto& p : L.pinned) {
      if (f_.find_variable(p.variable)->is_param) continue;
      if (!zero_loaded) {
        emit(mov_imm(kScratchA, 0));
        zero_loaded = true;
      }
      for (std::uint32_t w = 0; w < p.bytes; w += 8) emit(store(kScratchA, kBp, p.offset + w));
    }
  }

  void epilogue() {
    const auto& L = plan_.layout;
    const bool mac = mf_.instrumented;
    mf_.epilogue_starts.push_back(static_cast<std::int32_t>(mf_.code.size()));
    if (mac) {
      if (chained()) {
        emit(mov(kRefTag, kTag)).comment = "reference tag";
        emit(make(Op::mac_init));
      } else {
        emit(annotate(load(kRefTag, kSp, L.offset_of(SlotKind::tag)), Role::restore, Slot::tag, true,
                      "reference tag"));
        emit(make(Op::mac_init));
        emit(compress(kSp));
        emit(compress_imm(mf_.fid)).comment = "function id";
      }
    }
    for (const auto& s : L.saves) {
      if (s.kind == SlotKind::tag) {
        if (mac && chained()) {
          emit(annotate(load(s.reg, kSp, s.offset), Role::restore, Slot::tag, true, "previous tag"));
          emit(compress(s.reg));
        }
        continue;
      }
      emit(annotate(load(s.reg, kSp, s.offset), Role::restore, slot_of(s.kind), mac));
      if (mac) emit(compress(s.reg));
    }
    if (mac) {
      emit(finalize(kRecomputed));
      emit(check(kRefTag, kRecomputed));
    }
    emit(addi(kSp, kSp, L.size));
    emit(make(Op::ret));
  }

  std::vector<bool> reachable() const {
    std::vector<bool> seen(f_.blocks.size(), false);
    std::deque<std::uint32_t> work{0};
    seen[0] = true;
    while (!work.empty()) {
      const auto b = work.front();
      work.pop_front();
      for (auto s : analysis::block_successors(f_, b))
        if (!seen[s]) {
          seen[s] = true;
          work.push_back(s);
        }
    }
    return seen;
  }

  void body() {
    const auto live = reachable();
    std::vector<std::int32_t> block_start(f_.blocks.size(), 0);
    std::vector<std::size_t> fixups;
    for (std::uint32_t b = 0; b < f_.blocks.size(); ++b) {
      block_start[b] = static_cast<std::int32_t>(mf_.code.size());
      const auto& instrs = f_.blocks[b].instructions;
      if (!live[b]) {
        cur_ = static_cast<std::int32_t>(pts_.linear({b, 0}));
        emit(make(Op::trap)).comment = "unreachable block " + f_.blocks[b].label;
        continue;
      }
      for (std::uint32_t i = 0; i < instrs.size(); ++i) {
        cur_ = static_cast<std::int32_t>(pts_.linear({b, i}));
        lower(instrs[i], fixups);
      }
    }
    for (auto idx : fixups) {
      auto& m = mf_.code[idx];
      m.target = block_start.at(static_cast<std::size_t>(m.target));
      if (m.op == Op::br) m.target2 = block_start.at(static_cast<std::size_t>(m.target2));
    }
  }

  std::int32_t block_of(const std::string& label) const {
    return static_cast<std::int32_t>(f_.block_index(label));
  }

  void lower(const ir::Instruction& ins, std::vector<std::size_t>& fixups) {
    std::visit(
        [&](const auto& in) {
          using T = std::decay_t<decltype(in)>;
          if constexpr (std::is_same_v<T, ir::AssignImm>) {
            emit_def(mov_imm(kNoReg, in.value), def(in.dst));
          } else if constexpr (std::is_same_v<T, ir::AssignCopy>) {
            const Reg s = use(in.src, kScratchA);
            emit_def(mov(kNoReg, s), def(in.dst));
          } else if constexpr (std::is_same_v<T, ir::BinaryOp>) {
            auto m = make(Op::alu);
            m.alu_op = in.op;
            m.ra = use(in.a, kScratchA);
            m.rb = use(in.b, kScratchB);
            emit_def(std::move(m), def(in.dst));
          } else if constexpr (std::is_same_v<T, ir::Compare>) {
            auto m = make(Op::cmp);
            m.rel = in.rel;
            m.ra = use(in.a, kScratchA);
            m.rb = use(in.b, kScratchB);
            emit_def(std::move(m), def(in.dst));
          } else if constexpr (std::is_same_v<T, ir::BranchCond>) {
            auto m = make(Op::br);
            m.ra = use(in.cond, kScratchA);
            m.target = block_of(in.then_label);
            m.target2 = block_of(in.else_label);
            emit(std::move(m));
            fixups.push_back(mf_.code.size() - 1);
          } else if constexpr (std::is_same_v<T, ir::Jump>) {
            auto m = make(Op::jmp);
            m.target = block_of(in.label);
            emit(std::move(m));
            fixups.push_back(mf_.code.size() - 1);
          } else if constexpr (std::is_same_v<T, ir::Load>) {
            const Reg a = use(in.addr, kScratchA);
            emit_def(load(kNoReg, a, in.offset), def(in.dst));
          } else if constexpr (std::is_same_v<T, ir::Store>) {
            const Reg a = use(in.addr, kScratchA);
            const Reg s = use(in.src, kScratchB);
            emit(store(s, a, in.offset));
          } else if constexpr (std::is_same_v<T, ir::AddressOf>) {
            if (in.of_function) {
              auto m = mov_imm(kNoReg, 0);
              m.symbol = in.target;
              emit_def(std::move(m), def(in.dst));
            } else {
              emit_def(addi(kNoReg, kBp, pinned_offset(in.target)), def(in.dst));
            }
          } else if constexpr (std::is_same_v<T, ir::CallDirect>) {
            lower_call(in.callee, std::nullopt, in.args, in.dst);
          } else if constexpr (std::is_same_v<T, ir::CallIndirect>) {
            lower_call({}, in.pointer, in.args, in.dst);
          } else if constexpr (std::is_same_v<T, ir::ReadExternal>) {
            emit_def(make(Op::read_ext), def(in.dst));
          } else if constexpr (std::is_same_v<T, ir::Return>) {
            if (in.value) {
              const Reg r = use(*in.value, kScratchA);
              emit(mov(regalloc::arg_reg(0), r));
            } else {
              emit(mov_imm(regalloc::arg_reg(0), 0));
            }
            epilogue();
          }
        },
        ins.form);
  }

  void lower_call(const std::string& callee, const std::optional<std::string>& pointer,
                  const std::vector<std::string>& args, const std::optional<std::string>& dst) {
    const auto L = static_cast<std::uint32_t>(cur_);
    const analysis::ProgramPoint here = pts_.point(L);

    LiveCallerState live;
    for (const auto& r : plan_.ranges) {
      const auto loc = location(r);
      if (!loc.is_reg() || !regalloc::is_arg_reg(loc.reg)) continue;
      if (!r.covers(PointIndex::write_slot(L))) continue;
      if (std::find(r.defs.begin(), r.defs.end(), here) != r.defs.end()) continue;
      live.saved.push_back({loc.reg, r.id});
    }
    std::sort(live.saved.begin(), live.saved.end(), [](const VarRef& a, const VarRef& b) { return a.reg < b.reg; });

    CallLowering cl = lower_callsite(live, mf_.fid, cfg_);
    for (auto& m : cl.before) emit(std::move(m));

    if (pointer) {
      const Reg p = use(*pointer, kScratchA);
      if (p != kScratchA) emit(mov(kScratchA, p));
    }

    std::vector<Move> moves;
    std::vector<std::pair<Reg, std::int64_t>> mem_loads;
    for (std::size_t j = 0; j < args.size(); ++j) {
      const Reg dstr = regalloc::arg_reg(static_cast<unsigned>(j));
      const auto& a = args[j];
      if (pinned_.count(a)) {
        mem_loads.emplace_back(dstr, pinned_offset(a));
        continue;
      }
      const LiveRange& r = need_range(a, PointIndex::read_slot(L));
      const auto loc = location(r);
      if (loc.is_reg())
        moves.push_back({dstr, loc.reg, VarRef{loc.reg, r.id}});
      else
        mem_loads.emplace_back(dstr, plan_.layout.spill_offsets.at(loc.slot));
    }
    std::vector<MachineInstr> seq;
    sequentialize(moves, seq);
    for (auto& m : seq) emit(std::move(m));
    for (const auto& [r, off] : mem_loads) emit(load(r, kBp, off));

    MachineInstr call;
    if (pointer) {
      call = make(Op::icall);
      call.ra = kScratchA;
    } else {
      call = make(Op::call);
      call.symbol = callee;
    }
    cl.site.call_index = static_cast<std::int32_t>(mf_.code.size());
    cl.site.src_linear = L;
    emit(std::move(call));
    if (dst) emit(mov(kCallResult, regalloc::arg_reg(0)));
    for (auto& m : cl.after) emit(std::move(m));
    if (dst) emit_def(mov(kNoReg, kCallResult), def(*dst));
    mf_.calls.push_back(std::move(cl.site));
  }
};

}  // namespace

CallLowering lower_callsite(const LiveCallerState& live, std::uint64_t fid, const InstrumentConfig& cfg) {
  CallLowering cl;
  const bool prot = cfg.enabled && cfg.protect_caller_saved;
  const bool chained = cfg.mode == Mode::chained;
  const auto n = static_cast<std::uint32_t>(live.saved.size());
  cl.site.area_bytes = 8 * (1 + n);
  cl.site.protected_ = prot;
  auto& B = cl.before;
  auto& A = cl.after;

  B.push_back(addi(kSp, kSp, -static_cast<std::int64_t>(cl.site.area_bytes)));
  B.back().comment = "call-site area";
  if (prot) {
    cl.site.slots.push_back({Slot::callsite_tag, kTag, 0, -1});
    B.push_back(make(Op::mac_init));
    if (chained) {
      B.push_back(annotate(store(kTag, kSp, 0), Role::save, Slot::callsite_tag, true, "previous tag"));
      B.push_back(compress(kTag));
    } else {
      B.push_back(compress(kSp));
      B.push_back(compress_imm(fid));
      B.back().comment = "function id";
    }
  }
  for (std::uint32_t j = 0; j < n; ++j) {
    const auto& ref = live.saved[j];
    const std::int64_t off = 8 * (j + 1);
    cl.site.slots.push_back({Slot::arg, ref.reg, off, static_cast<std::int32_t>(ref.range)});
    auto s = annotate(store(ref.reg, kSp, off), Role::save, Slot::arg, prot);
    s.var_reads.push_back(ref);
    B.push_back(std::move(s));
    if (prot) B.push_back(compress(ref.reg));
  }
  if (prot) {
    if (chained) {
      B.push_back(finalize(kTag));
    } else {
      B.push_back(finalize(kRefTag));
      B.push_back(annotate(store(kRefTag, kSp, 0), Role::save, Slot::callsite_tag, true, "call-site tag"));
    }
  }

  if (prot) {
    if (chained) {
      A.push_back(mov(kRefTag, kTag));
      A.back().comment = "reference tag";
      A.push_back(make(Op::mac_init));
      A.push_back(annotate(load(kTag, kSp, 0), Role::restore, Slot::callsite_tag, true, "previous tag"));
      A.push_back(compress(kTag));
    } else {
      A.push_back(annotate(load(kRefTag, kSp, 0), Role::restore, Slot::callsite_tag, true, "reference tag"));
      A.push_back(make(Op::mac_init));
      A.push_back(compress(kSp));
      A.push_back(compress_imm(fid));
      A.back().comment = "function id";
    }
  }
  for (std::uint32_t j = 0; j < n; ++j) {
    const auto& ref = live.saved[j];
    auto l = annotate(load(ref.reg, kSp, 8 * (j + 1)), Role::restore, Slot::arg, prot);
    l.var_writes.push_back(ref);
    A.push_back(std::move(l));
    if (prot) A.push_back(compress(ref.reg));
  }
  if (prot) {
    A.push_back(finalize(kRecomputed));
    A.push_back(check(kRefTag, kRecomputed));
  }
  A.push_back(addi(kSp, kSp, cl.site.area_bytes));
  return cl;
}

MachineFunction lower_function(const FunctionPlan& plan, const regalloc::RegisterFileConfig& rf,
                               const InstrumentConfig& cfg) {
  if (!plan.function) throw LoweringError("no function to lower");
  return Lowerer(plan, rf, cfg).run();
}

MachineProgram link_program(const ir::Program& p, std::vector<MachineFunction> code) {
  MachineProgram out;
  out.entry = p.entry;
  const ir::Function* entry = p.find_function(p.entry);
  if (!entry) throw LinkError("entry function '" + p.entry + "' is not defined");
  out.entry_params = static_cast<std::uint32_t>(entry->params.size());

  out.code.push_back(make(Op::keygen));
  out.code.push_back(mov_imm(kTag, 0));
  for (std::uint32_t i = 0; i < out.entry_params; ++i) {
    auto m = make(Op::read_ext);
    m.rd = regalloc::arg_reg(i);
    out.code.push_back(std::move(m));
  }
  auto call = make(Op::call);
  call.symbol = p.entry;
  out.code.push_back(std::move(call));
  out.code.push_back(make(Op::halt));

  std::map<std::string, std::uint32_t> starts;
  std::uint32_t pc = static_cast<std::uint32_t>(out.code.size());
  for (const auto& mf : code) {
    starts[mf.name] = pc;
    pc += static_cast<std::uint32_t>(mf.code.size());
  }
  auto resolve = [&](const std::string& name) -> std::uint32_t {
    auto it = starts.find(name);
    if (it == starts.end()) throw LinkError("undefined function '" + name + "'");
    return it->second;
  };

  for (auto& m : out.code)
    if (m.op == Op::call) m.target = static_cast<std::int32_t>(resolve(m.symbol));

  for (auto& mf : code) {
    const std::uint32_t start = static_cast<std::uint32_t>(out.code.size());
    const auto base = static_cast<std::int32_t>(start);
    for (auto m : mf.code) {
      if (m.op == Op::br || m.op == Op::jmp) {
        m.target += base;
        if (m.op == Op::br) m.target2 += base;
      } else if (m.op == Op::call) {
        m.target = static_cast<std::int32_t>(resolve(m.symbol));
      } else if (m.op == Op::mov_imm && !m.symbol.empty()) {
        m.imm = static_cast<std::int64_t>(code_address(resolve(m.symbol)));
      }
      out.code.push_back(std::move(m));
    }
    FunctionSpan span;
    span.name = mf.name;
    span.start = start;
    span.end = static_cast<std::uint32_t>(out.code.size());
    mf.code.clear();
    mf.body_start += base;
    for (auto& e : mf.epilogue_starts) e += base;
    for (auto& c : mf.calls) c.call_index += base;
    span.meta = std::move(mf);
    out.functions.push_back(std::move(span));
  }
  return out;
}

std::vector<std::uint32_t> key_exposures(const MachineProgram& p) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t pc = 0; pc < p.code.size(); ++pc) {
    const auto& m = p.code[pc];
    if (m.rd == regalloc::kKeyBank || m.ra == regalloc::kKeyBank || m.rb == regalloc::kKeyBank) out.push_back(pc);
  }
  return out;
}

}  // namespace regguard::instrument
