#include "regguard/vm.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

namespace regguard::vm {

using machine::Op;
using machine::Slot;
using regalloc::Reg;

std::string_view to_string(Status s) {
  switch (s) {
    case Status::running: return "running";
    case Status::completed: return "completed";
    case Status::integrity_violation: return "integrity_violation";
    case Status::fault: return "fault";
  }
  return "?";
}

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::none: return "none";
    case FaultKind::out_of_bounds: return "out_of_bounds";
    case FaultKind::bad_opcode: return "bad_opcode";
    case FaultKind::max_instructions: return "max_instructions";
    case FaultKind::stack_overflow: return "stack_overflow";
  }
  return "?";
}

std::uint64_t CostModel::of(Op op) const {
  switch (op) {
    case Op::mac_init: return mac_init;
    case Op::mac_compress: return mac_compress;
    case Op::mac_finalize: return mac_finalize;
    case Op::mac_check: return mac_check;
    default: return other;
  }
}

namespace {

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

class Machine::Impl {
 public:
  Impl(Machine& m, const AdversaryScript& adv) : m_(m), p_(m.prog_), o_(m.opts_), adv_(adv) {
    const auto n = p_.code.size();
    fn_of_pc_.assign(n, -1);
    for (std::size_t i = 0; i < p_.functions.size(); ++i) {
      const auto& f = p_.functions[i];
      for (auto pc = f.start; pc < f.end; ++pc) fn_of_pc_[pc] = static_cast<int>(i);
      start_of_[f.start] = static_cast<int>(i);
    }
    fn_counters_.resize(p_.functions.size() + 1);
    for (std::size_t i = 0; i < adv_.events.size(); ++i)
      if (adv_.events[i].trigger.kind == Trigger::Kind::icount) icount_events_.push_back(i);
    std::stable_sort(icount_events_.begin(), icount_events_.end(), [&](std::size_t a, std::size_t b) {
      return adv_.events[a].trigger.icount < adv_.events[b].trigger.icount;
    });
    snaps_.resize(adv_.replays.size());
    m_.mem_.assign(o_.limits.stack_bytes, 0);
    base_ = kStackTop - m_.mem_.size();
    r_.fill(0);
    r_[regalloc::kSp] = kStackTop;
    r_[regalloc::kBp] = kStackTop;
    owners_.emplace_back();
    owners_.back().fill(-1);
  }

  RunOutcome run() {
    while (out_.status == Status::running) step();
    finish();
    return std::move(out_);
  }

 private:
  struct Frame {
    int fn = -1;
    std::uint32_t invocation = 0;
    std::uint64_t base = 0;  // stack pointer after the prologue reserves the frame
    std::uint64_t call_sp = 0;
    std::uint32_t call_pc = 0;
    std::size_t trace_index = 0;
    bool prologue_seen = false;
  };

  Machine& m_;
  const machine::MachineProgram& p_;
  const RunOptions& o_;
  const AdversaryScript& adv_;

  std::array<std::uint64_t, regalloc::kNumRegs> r_{};
  std::uint32_t pc_ = 0;
  mac::MacState st_{};
  std::uint64_t base_ = 0;
  std::vector<int> fn_of_pc_;
  std::map<std::uint32_t, int> start_of_;
  std::vector<FunctionCounters> fn_counters_;  // last slot: startup stub
  std::vector<Frame> frames_;
  std::map<std::string, std::uint32_t> invocations_;
  std::vector<std::size_t> icount_events_;
  std::size_t next_icount_ = 0;
  std::vector<std::optional<std::vector<std::uint8_t>>> snaps_;
  std::vector<std::array<std::int32_t, regalloc::kNumRegs>> owners_;
  std::vector<std::uint64_t> shadow_tags_;
  std::size_t input_pos_ = 0;
  std::optional<std::uint64_t> first_write_;
  RunOutcome out_;

  std::uint64_t executed() const { return out_.counters.instructions; }

  const machine::FunctionSpan& span(int i) const { return p_.functions[static_cast<std::size_t>(i)]; }
  std::string fn_name_at(std::uint32_t pc) const {
    return pc < fn_of_pc_.size() && fn_of_pc_[pc] >= 0 ? span(fn_of_pc_[pc]).name : std::string("_start");
  }

  void fault(FaultKind k, std::string detail) {
    out_.status = Status::fault;
    out_.fault = k;
    out_.fault_detail = std::move(detail);
  }

  bool in_stack(std::uint64_t addr, std::uint64_t n) const {
    return addr >= base_ && addr <= kStackTop && n <= kStackTop - addr;
  }
  std::uint64_t load64(std::uint64_t addr) const {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | m_.mem_[addr - base_ + static_cast<std::uint64_t>(i)];
    return v;
  }
  void store64(std::uint64_t addr, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) m_.mem_[addr - base_ + static_cast<std::uint64_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
  }

  std::string render(std::uint64_t v) const {
    if (v >= machine::kCodeBase && (v - machine::kCodeBase) % machine::kInstrBytes == 0) {
      const auto pc = static_cast<std::uint32_t>((v - machine::kCodeBase) / machine::kInstrBytes);
      if (auto it = start_of_.find(pc); it != start_of_.end()) return "&" + span(it->second).name;
    }
    return std::to_string(static_cast<std::int64_t>(v));
  }

  std::optional<std::uint32_t> code_target(std::uint64_t addr) const {
    if (addr < machine::kCodeBase || (addr - machine::kCodeBase) % machine::kInstrBytes) return std::nullopt;
    const auto pc = (addr - machine::kCodeBase) / machine::kInstrBytes;
    if (pc >= p_.code.size()) return std::nullopt;
    return static_cast<std::uint32_t>(pc);
  }

  // ------------------------------------------------------------------ adversary

  struct Resolved {
    std::optional<std::uint64_t> address;
    std::string note;
  };

  // Source point of the instruction at or after `pc` within function `fi`.
  std::optional<std::uint32_t> point_near(int fi, std::uint32_t pc) const {
    const auto& f = span(fi);
    for (auto q = pc; q < f.end; ++q)
      if (p_.code[q].src_linear >= 0) return static_cast<std::uint32_t>(p_.code[q].src_linear);
    return std::nullopt;
  }

  const machine::CallSite* call_site_at(int fi, std::uint32_t pc) const {
    for (const auto& c : span(fi).meta.calls)
      if (static_cast<std::uint32_t>(c.call_index) == pc) return &c;
    return nullptr;
  }

  // Start of the call-site area of frame `i`, when it has one active.
  std::optional<std::uint64_t> area_of(std::size_t i, const machine::CallSite** site) const {
    const Frame& fr = frames_[i];
    if (i + 1 == frames_.size()) {
      *site = call_site_at(fr.fn, pc_);
      if (*site) return r_[regalloc::kSp];
      return std::nullopt;
    }
    *site = call_site_at(fr.fn, fr.call_pc);
    if (*site) return fr.call_sp;
    return std::nullopt;
  }

  Resolved resolve_register(std::size_t i, Reg reg, const std::string& label) const {
    const Frame& fr = frames_[i];
    if (regalloc::is_var_reg(reg)) {
      for (std::size_t j = i; j < frames_.size(); ++j) {
        if (j == i && label.empty()) continue;
        const auto* s = span(frames_[j].fn).meta.layout.find(regalloc::SlotKind::var_reg, reg);
        if (s) return {frames_[j].base + static_cast<std::uint64_t>(s->offset), {}};
        if (j == i) break;
      }
      return {std::nullopt, (label.empty() ? regalloc::reg_name(reg) : label) +
                                " is register-resident, not on the stack"};
    }
    if (regalloc::is_arg_reg(reg)) {
      const machine::CallSite* site = nullptr;
      if (auto area = area_of(i, &site)) {
        for (const auto& sl : site->slots)
          if (sl.kind == Slot::arg && sl.reg == reg) return {*area + static_cast<std::uint64_t>(sl.offset), {}};
      }
      return {std::nullopt, (label.empty() ? regalloc::reg_name(reg) : label) +
                                " is register-resident, not on the stack"};
    }
    (void)fr;
    return {std::nullopt, "register " + regalloc::reg_name(reg) + " has no stack slot"};
  }

  Resolved resolve_variable(const std::string& name) const {
    for (std::size_t k = frames_.size(); k-- > 0;) {
      const Frame& fr = frames_[k];
      const auto& meta = span(fr.fn).meta;
      if (std::find(meta.variables.begin(), meta.variables.end(), name) == meta.variables.end()) continue;
      if (const auto* pin = meta.layout.find_pinned(name)) return {fr.base + static_cast<std::uint64_t>(pin->offset), {}};
      const bool innermost = k + 1 == frames_.size();
      const std::uint32_t at_pc = innermost ? pc_ : fr.call_pc;
      const machine::CallSite* site = call_site_at(fr.fn, at_pc);
      std::optional<std::uint32_t> lin = site ? std::optional<std::uint32_t>(site->src_linear) : point_near(fr.fn, at_pc);
      if (!lin) return {std::nullopt, "variable '" + name + "' is not live here"};
      const machine::RangeInfo* hit = nullptr;
      for (const auto& ri : meta.ranges) {
        if (ri.variable != name) continue;
        const bool live = site ? (ri.covers(2 * *lin) && ri.covers(2 * *lin + 1)) : ri.covers(2 * *lin);
        if (live) {
          hit = &ri;
          break;
        }
      }
      if (!hit) return {std::nullopt, "variable '" + name + "' is not live here"};
      if (!hit->loc.is_reg()) return {fr.base + static_cast<std::uint64_t>(hit->spill_offset), {}};
      if (regalloc::is_var_reg(hit->loc.reg)) {
        // The value sits in a callee-saved register; the first deeper frame
        // that saved that register holds it.
        for (std::size_t j = k + 1; j < frames_.size(); ++j) {
          const auto* s = span(frames_[j].fn).meta.layout.find(regalloc::SlotKind::var_reg, hit->loc.reg);
          if (s) return {frames_[j].base + static_cast<std::uint64_t>(s->offset), {}};
        }
        return {std::nullopt, "variable '" + name + "' is register-resident (" + regalloc::reg_name(hit->loc.reg) +
                                  "), not on the stack"};
      }
      return resolve_register(k, hit->loc.reg, "variable '" + name + "'");
    }
    return {std::nullopt, "no active frame declares '" + name + "'"};
  }

  Resolved resolve(const Target& t) const {
    switch (t.kind) {
      case Target::Kind::sp_rel: return {r_[regalloc::kSp] + static_cast<std::uint64_t>(t.offset), {}};
      case Target::Kind::bp_rel: return {r_[regalloc::kBp] + static_cast<std::uint64_t>(t.offset), {}};
      case Target::Kind::absolute: return {t.address, {}};
      case Target::Kind::slot: break;
    }
    if (frames_.empty()) return {std::nullopt, "no active frame for slot " + t.name};
    const std::size_t top = frames_.size() - 1;
    const Frame& fr = frames_[top];
    const auto& layout = span(fr.fn).meta.layout;
    auto fixed = [&](regalloc::SlotKind k) -> Resolved {
      return {fr.base + static_cast<std::uint64_t>(layout.offset_of(k)), {}};
    };
    if (t.name == "tag") return fixed(regalloc::SlotKind::tag);
    if (t.name == "ret" || t.name == "lr") return fixed(regalloc::SlotKind::ret);
    if (t.name == "bp") return fixed(regalloc::SlotKind::bp);
    if (t.name == "calltag") {
      const machine::CallSite* site = nullptr;
      if (auto area = area_of(top, &site); area && site->protected_) return {*area, {}};
      return {std::nullopt, "no protected call-site area is active"};
    }
    if (auto reg = regalloc::parse_reg(t.name)) {
      if (regalloc::is_var_reg(*reg)) {
        if (const auto* s = layout.find(regalloc::SlotKind::var_reg, *reg))
          return {fr.base + static_cast<std::uint64_t>(s->offset), {}};
        return {std::nullopt, span(fr.fn).name + " does not save " + t.name};
      }
      return resolve_register(top, *reg, t.name);
    }
    return resolve_variable(t.name);
  }

  void write_bytes(std::uint64_t addr, const std::vector<std::uint8_t>& bytes, std::string note) {
    WriteRecord w;
    w.icount = executed();
    w.address = addr;
    w.size = static_cast<std::uint32_t>(bytes.size());
    w.note = std::move(note);
    if (!in_stack(addr, bytes.size())) {
      w.applied = false;
      w.note += (w.note.empty() ? "" : "; ") + std::string("outside the stack, not applied");
      out_.writes.push_back(std::move(w));
      return;
    }
    bool changed = false;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
      auto& b = m_.mem_[addr - base_ + i];
      changed |= b != bytes[i];
      b = bytes[i];
    }
    w.applied = true;
    w.changed = changed;
    if (changed && !first_write_) first_write_ = executed();
    if (!changed) w.note += (w.note.empty() ? "" : "; ") + std::string("no bytes changed");
    out_.writes.push_back(std::move(w));
  }

  static std::vector<std::uint8_t> le_bytes(std::uint64_t v) {
    std::vector<std::uint8_t> b(8);
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v >> (8 * i));
    return b;
  }

  void apply(const Event& e) {
    const Resolved where = resolve(e.action.target);
    if (!where.address) {
      out_.notes.push_back("line " + std::to_string(e.line) + ": " + where.note + "; action skipped");
      return;
    }
    const std::uint64_t a = *where.address;
    switch (e.action.kind) {
      case Action::Kind::write: write_bytes(a, le_bytes(e.action.value), {}); break;
      case Action::Kind::xor_mask: {
        if (!in_stack(a, 8)) {
          write_bytes(a, le_bytes(0), "xor");
          break;
        }
        write_bytes(a, le_bytes(load64(a) ^ e.action.value), {});
        break;
      }
      case Action::Kind::bytes: write_bytes(a, e.action.data, {}); break;
      case Action::Kind::read: {
        TranscriptEntry t;
        t.icount = executed();
        t.address = a;
        t.mapped = in_stack(a, e.action.length);
        t.bytes.assign(e.action.length, 0);
        if (t.mapped)
          for (std::uint32_t i = 0; i < e.action.length; ++i) t.bytes[i] = m_.mem_[a - base_ + i];
        out_.transcript.push_back(std::move(t));
        break;
      }
    }
  }

  bool matches(const Trigger& t, const Frame& fr, Site site, std::uint32_t call_site) const {
    if (t.kind != Trigger::Kind::site || t.site != site) return false;
    if (t.function != span(fr.fn).name) return false;
    if (t.invocation != 0 && t.invocation != fr.invocation) return false;
    return site != Site::at_call || t.call_site == call_site;
  }

  void fire_site(Site site, std::uint32_t call_site = 0) {
    const Frame& fr = frames_.back();
    for (const auto& e : adv_.events)
      if (matches(e.trigger, fr, site, call_site)) apply(e);
  }

  void replays_after_prologue() {
    const Frame& fr = frames_.back();
    const auto& meta = span(fr.fn).meta;
    std::int64_t lo = meta.layout.size;
    for (const auto& s : meta.layout.saves) lo = std::min(lo, s.offset);
    const std::uint64_t from = fr.base + static_cast<std::uint64_t>(lo);
    const std::uint64_t len = meta.layout.size - static_cast<std::uint64_t>(lo);
    for (std::size_t i = 0; i < adv_.replays.size(); ++i) {
      const auto& rp = adv_.replays[i];
      if (rp.function != meta.name) continue;
      if (rp.capture == fr.invocation && in_stack(from, len))
        snaps_[i] = std::vector<std::uint8_t>(m_.mem_.begin() + static_cast<std::ptrdiff_t>(from - base_),
                                              m_.mem_.begin() + static_cast<std::ptrdiff_t>(from - base_ + len));
      if (rp.inject == fr.invocation && snaps_[i])
        write_bytes(from, *snaps_[i], "replay of " + rp.function + " call " + std::to_string(rp.capture));
    }
  }

  void hooks() {
    while (next_icount_ < icount_events_.size() &&
           adv_.events[icount_events_[next_icount_]].trigger.icount <= executed()) {
      const Event& e = adv_.events[icount_events_[next_icount_++]];
      if (e.trigger.icount == executed()) apply(e);
    }
    if (frames_.empty()) return;
    Frame& fr = frames_.back();
    if (fn_of_pc_[pc_] != fr.fn) return;
    const auto& meta = span(fr.fn).meta;
    if (!fr.prologue_seen && static_cast<std::int32_t>(pc_) == meta.body_start) {
      fr.prologue_seen = true;
      fire_site(Site::after_prologue);
      replays_after_prologue();
    }
    for (auto e : meta.epilogue_starts)
      if (static_cast<std::int32_t>(pc_) == e) fire_site(Site::before_epilogue);
    for (std::size_t k = 0; k < meta.calls.size(); ++k)
      if (static_cast<std::uint32_t>(meta.calls[k].call_index) == pc_) fire_site(Site::at_call, static_cast<std::uint32_t>(k + 1));
  }

  // ------------------------------------------------------------------ execution

  void enter(std::uint32_t target, std::uint32_t return_pc) {
    r_[regalloc::kLr] = machine::code_address(return_pc);
    if (!frames_.empty()) {
      frames_.back().call_sp = r_[regalloc::kSp];
      frames_.back().call_pc = pc_;
    }
    pc_ = target;
    auto it = start_of_.find(target);
    if (it == start_of_.end()) return;  // control hijacked into the middle of a function
    const auto& f = span(it->second);
    Frame fr;
    fr.fn = it->second;
    fr.invocation = ++invocations_[f.name];
    fr.base = r_[regalloc::kSp] - f.meta.layout.size;
    CallRecord rec;
    rec.callee = f.name;
    for (std::uint32_t i = 0; i < f.meta.param_count; ++i) rec.args.push_back(render(r_[regalloc::arg_reg(i)]));
    fr.trace_index = out_.trace.size();
    out_.trace.push_back(std::move(rec));
    frames_.push_back(fr);
    fn_counters_[static_cast<std::size_t>(it->second)].calls++;
    if (o_.shadow_liveness) {
      owners_.emplace_back();
      owners_.back().fill(-1);
    }
  }

  void leave() {
    if (!frames_.empty() && fn_of_pc_[pc_] == frames_.back().fn) {
      out_.trace[frames_.back().trace_index].result = render(r_[regalloc::arg_reg(0)]);
      frames_.pop_back();
      if (o_.shadow_liveness && owners_.size() > 1) {
        owners_.pop_back();
        for (Reg q = 0; q < regalloc::kVarBase; ++q) owners_.back()[q] = -1;
      }
    }
  }

  void shadow_reads(const machine::MachineInstr& in) {
    for (const auto& ref : in.var_reads) {
      const auto owner = owners_.back()[ref.reg];
      if (owner != static_cast<std::int32_t>(ref.range)) {
        std::ostringstream os;
        os << fn_name_at(pc_) << " pc " << hex(machine::code_address(pc_)) << ": " << regalloc::reg_name(ref.reg)
           << " read for range #" << ref.range << " but holds " << (owner < 0 ? std::string("no live value") : "range #" + std::to_string(owner));
        out_.shadow_violations.push_back(os.str());
      }
    }
  }

  void shadow_writes(const machine::MachineInstr& in, Reg written) {
    if (written != regalloc::kNoReg && written < regalloc::kNumRegs) owners_.back()[written] = -1;
    for (const auto& ref : in.var_writes) owners_.back()[ref.reg] = static_cast<std::int32_t>(ref.range);
  }

  void step() {
    if (pc_ >= p_.code.size()) {
      fault(FaultKind::out_of_bounds, "pc outside code");
      return;
    }
    hooks();
    if (executed() >= o_.limits.max_instructions) {
      fault(FaultKind::max_instructions, "limit " + std::to_string(o_.limits.max_instructions) + " reached");
      return;
    }
    const auto& in = p_.code[pc_];
    if (static_cast<std::size_t>(in.op) >= machine::kOpCount) {
      fault(FaultKind::bad_opcode, "opcode " + std::to_string(static_cast<int>(in.op)));
      return;
    }
    if (o_.shadow_liveness) shadow_reads(in);

    const std::uint64_t cost = o_.costs.of(in.op);
    auto& c = out_.counters;
    c.instructions++;
    c.cost += cost;
    c.per_op[static_cast<std::size_t>(in.op)]++;
    const int fi = fn_of_pc_[pc_];
    auto& fc = fn_counters_[fi < 0 ? fn_counters_.size() - 1 : static_cast<std::size_t>(fi)];
    fc.instructions++;
    fc.cost += cost;
    if (machine::is_mac(in.op)) {
      c.mac_cost += cost;
      fc.mac_cost += cost;
    }

    std::uint32_t next = pc_ + 1;
    Reg written = regalloc::kNoReg;
    auto mem_ok = [&](std::uint64_t addr) {
      if (in_stack(addr, 8)) return true;
      fault(FaultKind::out_of_bounds, "memory access at " + hex(addr));
      return false;
    };

    switch (in.op) {
      case Op::mov_imm:
        r_[in.rd] = static_cast<std::uint64_t>(in.imm);
        written = in.rd;
        break;
      case Op::mov_reg:
        r_[in.rd] = r_[in.ra];
        written = in.rd;
        break;
      case Op::alu: {
        const auto a = r_[in.ra], b = r_[in.rb];
        r_[in.rd] = in.alu_op == ir::BinOp::add ? a + b : in.alu_op == ir::BinOp::sub ? a - b : a * b;
        written = in.rd;
        break;
      }
      case Op::cmp: {
        const auto a = static_cast<std::int64_t>(r_[in.ra]), b = static_cast<std::int64_t>(r_[in.rb]);
        bool v = false;
        switch (in.rel) {
          case ir::Rel::eq: v = a == b; break;
          case ir::Rel::ne: v = a != b; break;
          case ir::Rel::lt: v = a < b; break;
          case ir::Rel::ge: v = a >= b; break;
        }
        r_[in.rd] = v ? 1 : 0;
        written = in.rd;
        break;
      }
      case Op::br: next = static_cast<std::uint32_t>(r_[in.ra] != 0 ? in.target : in.target2); break;
      case Op::jmp: next = static_cast<std::uint32_t>(in.target); break;
      case Op::load: {
        const auto addr = r_[in.ra] + static_cast<std::uint64_t>(in.imm);
        if (!mem_ok(addr)) return;
        r_[in.rd] = load64(addr);
        written = in.rd;
        break;
      }
      case Op::store: {
        const auto addr = r_[in.ra] + static_cast<std::uint64_t>(in.imm);
        if (!mem_ok(addr)) return;
        store64(addr, r_[in.rb]);
        if (o_.trace_saves && in.role == machine::Role::save)
          out_.saves.push_back({executed(), addr, fn_name_at(pc_), in.slot, in.mac_covered});
        break;
      }
      case Op::add_imm:
        r_[in.rd] = r_[in.ra] + static_cast<std::uint64_t>(in.imm);
        written = in.rd;
        if (in.rd == regalloc::kSp && r_[in.rd] < base_) {
          fault(FaultKind::stack_overflow, "sp " + hex(r_[in.rd]));
          return;
        }
        if (in.rd == regalloc::kSp && r_[in.rd] > kStackTop) {
          fault(FaultKind::out_of_bounds, "sp above stack top");
          return;
        }
        break;
      case Op::call:
        if (o_.shadow_liveness) shadow_writes(in, written);
        enter(static_cast<std::uint32_t>(in.target), pc_ + 1);
        return;
      case Op::icall: {
        auto t = code_target(r_[in.ra]);
        if (!t) {
          fault(FaultKind::out_of_bounds, "indirect call to " + hex(r_[in.ra]));
          return;
        }
        if (o_.shadow_liveness) shadow_writes(in, written);
        enter(*t, pc_ + 1);
        return;
      }
      case Op::ret: {
        auto t = code_target(r_[regalloc::kLr]);
        if (!t) {
          fault(FaultKind::out_of_bounds, "return to " + hex(r_[regalloc::kLr]));
          return;
        }
        leave();
        pc_ = *t;
        return;
      }
      case Op::read_ext:
        r_[in.rd] = input_pos_ < o_.inputs.size() ? static_cast<std::uint64_t>(o_.inputs[input_pos_++]) : 0;
        written = in.rd;
        break;
      case Op::keygen: {
        std::uint64_t k0, k1;
        if (o_.seed) {
          std::mt19937_64 rng(*o_.seed);
          k0 = rng();
          k1 = rng();
        } else {
          std::random_device rd;
          k0 = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
          k1 = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        }
        m_.key_ = mac::MacKey{k0, k1};
        break;
      }
      case Op::halt:
        out_.status = Status::completed;
        out_.value = static_cast<std::int64_t>(r_[regalloc::arg_reg(0)]);
        return;
      case Op::trap: fault(FaultKind::bad_opcode, "trap in unreachable code"); return;
      case Op::mac_init: st_ = mac::mac_init(m_.key_); break;
      case Op::mac_compress:
        st_ = mac::mac_compress(st_, in.ra == regalloc::kNoReg ? static_cast<std::uint64_t>(in.imm) : r_[in.ra]);
        break;
      case Op::mac_finalize:
        r_[in.rd] = mac::mac_finalize(st_).value;
        written = in.rd;
        if (o_.audit && in.rd != regalloc::kRecomputed) shadow_tags_.push_back(r_[in.rd]);
        break;
      case Op::mac_check:
        if (o_.audit) {
          if (shadow_tags_.empty()) {
            out_.audit_violations.push_back(fn_name_at(pc_) + ": check without a generated tag");
          } else {
            if (shadow_tags_.back() != r_[in.ra])
              out_.audit_violations.push_back(fn_name_at(pc_) + " pc " + hex(machine::code_address(pc_)) +
                                              ": reference tag differs from the generated one");
            shadow_tags_.pop_back();
          }
        }
        if (r_[in.ra] != r_[in.rb]) {
          out_.status = Status::integrity_violation;
          out_.violation_pc = pc_;
          out_.violation_function = fn_name_at(pc_);
          return;
        }
        break;
    }
    if (o_.shadow_liveness) shadow_writes(in, written);
    pc_ = next;
  }

  void finish() {
    for (std::size_t i = 0; i < p_.functions.size(); ++i) out_.counters.per_function[span(static_cast<int>(i)).name] = fn_counters_[i];
    out_.counters.per_function["_start"] = fn_counters_.back();
    if (out_.status == Status::integrity_violation && first_write_)
      out_.detection_latency = executed() - *first_write_;
    if (out_.status == Status::completed && first_write_) out_.notes.push_back("silent corruption (unprotected)");
  }
};

Machine::Machine(const machine::MachineProgram& prog, RunOptions opts) : prog_(prog), opts_(std::move(opts)) {}

RunOutcome Machine::run(const AdversaryScript& adversary) {
  if (ran_) throw std::logic_error("Machine::run called twice");
  ran_ = true;
  Impl impl(*this, adversary);
  return impl.run();
}

RunOutcome run(const machine::MachineProgram& prog, const AdversaryScript& adversary, const RunOptions& opts) {
  Machine m(prog, opts);
  return m.run(adversary);
}

RunOutcome replay_attack(const machine::MachineProgram& prog, const FrameRef& capture, const FrameRef& inject,
                         const RunOptions& opts) {
  if (capture.function != inject.function)
    throw ScriptError(0, "replay must capture and inject frames of the same function");
  AdversaryScript s;
  s.replays.push_back({capture.function, capture.call, inject.call, 0});
  validate_script(s, prog);
  return run(prog, s, opts);
}

// ---------------------------------------------------------------------------
// outcome rendering

int RunOutcome::exit_code() const {
  switch (status) {
    case Status::completed: return 0;
    case Status::integrity_violation: return 3;
    case Status::fault:
    case Status::running: return 4;
  }
  return 4;
}

bool RunOutcome::corrupted() const {
  return std::find(notes.begin(), notes.end(), "silent corruption (unprotected)") != notes.end();
}

bool RunOutcome::memory_changed() const {
  return std::any_of(writes.begin(), writes.end(), [](const WriteRecord& w) { return w.changed; });
}

std::string RunOutcome::verdict() const {
  std::ostringstream os;
  switch (status) {
    case Status::completed:
      os << "completed: result " << value;
      if (corrupted()) os << "; silent corruption (unprotected)";
      break;
    case Status::integrity_violation:
      os << "integrity violation detected by " << violation_function << " at "
         << hex(machine::code_address(violation_pc));
      if (detection_latency) os << " (" << *detection_latency << " instructions after the first corrupting write)";
      break;
    case Status::fault: os << "fault: " << to_string(fault) << " (" << fault_detail << ")"; break;
    case Status::running: os << "running"; break;
  }
  return os.str();
}

std::string RunOutcome::summary_line() const {
  std::ostringstream os;
  os << "status=" << to_string(status);
  if (status == Status::completed) os << " result=" << value;
  if (status == Status::integrity_violation)
    os << " function=" << violation_function << " pc=" << hex(machine::code_address(violation_pc));
  if (status == Status::fault) os << " fault=" << to_string(fault);
  os << " instructions=" << counters.instructions << " cost=" << counters.cost << " mac_cost=" << counters.mac_cost;
  std::size_t applied = 0;
  for (const auto& w : writes) applied += w.applied;
  os << " writes=" << applied << " reads=" << transcript.size();
  if (detection_latency) os << " latency=" << *detection_latency;
  if (corrupted()) os << " silent_corruption=1";
  return os.str();
}

std::string RunOutcome::to_json() const {
  nlohmann::ordered_json j;
  j["status"] = to_string(status);
  j["exit_code"] = exit_code();
  if (status == Status::completed) j["result"] = value;
  if (status == Status::integrity_violation) {
    j["function"] = violation_function;
    j["pc"] = machine::code_address(violation_pc);
  }
  if (status == Status::fault) {
    j["fault"] = to_string(fault);
    j["detail"] = fault_detail;
  }
  if (detection_latency) j["detection_latency"] = *detection_latency;
  j["instructions"] = counters.instructions;
  j["cost"] = counters.cost;
  j["mac_cost"] = counters.mac_cost;
  auto& ws = j["writes"] = nlohmann::ordered_json::array();
  for (const auto& w : writes)
    ws.push_back({{"icount", w.icount}, {"address", w.address}, {"size", w.size}, {"applied", w.applied}, {"note", w.note}});
  auto& ts = j["transcript"] = nlohmann::ordered_json::array();
  for (const auto& t : transcript) {
    std::string h;
    char b[3];
    for (auto x : t.bytes) {
      std::snprintf(b, sizeof b, "%02x", x);
      h += b;
    }
    ts.push_back({{"icount", t.icount}, {"address", t.address}, {"bytes", h}, {"mapped", t.mapped}});
  }
  auto& tr = j["trace"] = nlohmann::ordered_json::array();
  for (const auto& c : trace) tr.push_back({{"callee", c.callee}, {"args", c.args}, {"result", c.result}});
  auto& pf = j["functions"] = nlohmann::ordered_json::object();
  for (const auto& [name, fc] : counters.per_function)
    pf[name] = {{"calls", fc.calls}, {"instructions", fc.instructions}, {"cost", fc.cost}, {"mac_cost", fc.mac_cost}};
  j["notes"] = notes;
  return j.dump();
}

// ---------------------------------------------------------------------------
// overhead

OverheadReport measure_overhead(const machine::MachineProgram& instrumented, const machine::MachineProgram& plain,
                                const RunOptions& opts) {
  const AdversaryScript none;
  const RunOutcome a = run(instrumented, none, opts);
  const RunOutcome b = run(plain, none, opts);
  OverheadReport rep;
  rep.instrumented_instructions = a.counters.instructions;
  rep.plain_instructions = b.counters.instructions;
  rep.instrumented_cost = a.counters.cost;
  rep.plain_cost = b.counters.cost;
  rep.mac_cost = a.counters.mac_cost;
  rep.ratio = b.counters.cost ? static_cast<double>(a.counters.cost) / static_cast<double>(b.counters.cost) : 1.0;
  rep.mac_share = a.counters.cost ? static_cast<double>(a.counters.mac_cost) / static_cast<double>(a.counters.cost) : 0.0;
  rep.results_match = a.status == b.status && a.value == b.value && a.trace == b.trace;
  for (const auto& [name, fc] : a.counters.per_function) {
    FunctionOverhead fo;
    fo.name = name;
    fo.calls = fc.calls;
    fo.instrumented_cost = fc.cost;
    fo.mac_cost = fc.mac_cost;
    if (auto it = b.counters.per_function.find(name); it != b.counters.per_function.end()) fo.plain_cost = it->second.cost;
    rep.functions.push_back(fo);
  }
  return rep;
}

std::string OverheadReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(20) << "function" << std::right << std::setw(8) << "calls" << std::setw(12) << "plain"
     << std::setw(14) << "instrumented" << std::setw(10) << "mac" << std::setw(14) << "mac/call" << '\n';
  for (const auto& f : functions) {
    os << std::left << std::setw(20) << f.name << std::right << std::setw(8) << f.calls << std::setw(12) << f.plain_cost
       << std::setw(14) << f.instrumented_cost << std::setw(10) << f.mac_cost << std::setw(14);
    if (f.calls)
      os << std::fixed << std::setprecision(2) << static_cast<double>(f.mac_cost) / static_cast<double>(f.calls);
    else
      os << "-";
    os << '\n';
  }
  os << std::left << std::setw(20) << "total" << std::right << std::setw(8) << "" << std::setw(12) << plain_cost
     << std::setw(14) << instrumented_cost << std::setw(10) << mac_cost << '\n';
  os << "ratio " << std::fixed << std::setprecision(6) << ratio << "  mac share " << mac_share
     << (results_match ? "" : "  RESULTS DIFFER") << '\n';
  return os.str();
}

std::string OverheadReport::summary_line() const {
  std::ostringstream os;
  os << "plain_instructions=" << plain_instructions << " instrumented_instructions=" << instrumented_instructions
     << " plain_cost=" << plain_cost << " instrumented_cost=" << instrumented_cost << " mac_cost=" << mac_cost
     << std::fixed << std::setprecision(6) << " ratio=" << ratio << " mac_share=" << mac_share
     << " results_match=" << (results_match ? 1 : 0);
  return os.str();
}

std::string OverheadReport::to_json() const {
  nlohmann::ordered_json j;
  j["plain_instructions"] = plain_instructions;
  j["instrumented_instructions"] = instrumented_instructions;
  j["plain_cost"] = plain_cost;
  j["instrumented_cost"] = instrumented_cost;
  j["mac_cost"] = mac_cost;
  j["ratio"] = ratio;
  j["mac_share"] = mac_share;
  j["results_match"] = results_match;
  auto& fs = j["functions"] = nlohmann::ordered_json::array();
  for (const auto& f : functions)
    fs.push_back({{"name", f.name}, {"calls", f.calls}, {"plain_cost", f.plain_cost},
                  {"instrumented_cost", f.instrumented_cost}, {"mac_cost", f.mac_cost}});
  return j.dump();
}

}  // namespace regguard::vm
