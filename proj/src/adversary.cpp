#include <cctype>
#include <charconv>
#include <sstream>

#include "regguard/vm.hpp"

namespace regguard::vm {

namespace {

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  bool neg = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    neg = s[0] == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return neg ? -static_cast<std::int64_t>(v) : static_cast<std::int64_t>(v);
}

class LineParser {
 public:
  LineParser(std::vector<std::string> words, int line) : w_(std::move(words)), line_(line) {}

  bool done() const { return i_ >= w_.size(); }
  const std::string& peek() const {
    static const std::string kEnd;
    return done() ? kEnd : w_[i_];
  }
  std::string next(std::string_view what) {
    if (done()) fail("expected " + std::string(what));
    return w_[i_++];
  }
  void keyword(std::string_view kw) {
    const std::string got = next(kw);
    if (got != kw) fail("expected '" + std::string(kw) + "', found '" + got + "'");
  }
  bool accept(std::string_view kw) {
    if (!done() && w_[i_] == kw) {
      ++i_;
      return true;
    }
    return false;
  }
  std::int64_t number(std::string_view what) {
    const std::string t = next(what);
    auto v = parse_int(t);
    if (!v) fail("expected " + std::string(what) + ", found '" + t + "'");
    return *v;
  }
  std::uint32_t positive(std::string_view what) {
    const auto v = number(what);
    if (v < 1 || v > 0xffffffffLL) fail(std::string(what) + " must be a positive count");
    return static_cast<std::uint32_t>(v);
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ScriptError(line_, msg); }
  void end() const {
    if (!done()) fail("unexpected '" + w_[i_] + "'");
  }

 private:
  std::vector<std::string> w_;
  std::size_t i_ = 0;
  int line_;
};

Target parse_target(LineParser& p) {
  Target t;
  const std::string tok = p.next("target");
  if (tok == "slot") {
    t.kind = Target::Kind::slot;
    t.name = p.next("slot name");
    return t;
  }
  auto rel = [&](std::string_view base, Target::Kind kind) -> bool {
    if (tok.rfind(base, 0) != 0) return false;
    std::string_view rest = std::string_view(tok).substr(base.size());
    t.kind = kind;
    if (rest.empty()) return true;
    if (rest[0] != '+' && rest[0] != '-') p.fail("bad offset in target '" + tok + "'");
    auto v = parse_int(rest);
    if (!v) p.fail("bad offset in target '" + tok + "'");
    t.offset = *v;
    return true;
  };
  if (rel("sp", Target::Kind::sp_rel) || rel("bp", Target::Kind::bp_rel)) return t;
  auto v = parse_int(tok);
  if (!v) p.fail("bad target '" + tok + "'");
  t.kind = Target::Kind::absolute;
  t.address = static_cast<std::uint64_t>(*v);
  return t;
}

Action parse_action(LineParser& p) {
  Action a;
  const std::string verb = p.next("action");
  if (verb == "write" || verb == "xor") {
    a.kind = verb == "write" ? Action::Kind::write : Action::Kind::xor_mask;
    a.target = parse_target(p);
    a.value = static_cast<std::uint64_t>(p.number("value"));
  } else if (verb == "bytes") {
    a.kind = Action::Kind::bytes;
    a.target = parse_target(p);
    std::string hex = p.next("hex bytes");
    if (hex.rfind("0x", 0) == 0) hex = hex.substr(2);
    if (hex.empty() || hex.size() % 2) p.fail("hex byte string must have an even number of digits");
    for (std::size_t i = 0; i < hex.size(); i += 2) {
      auto v = parse_int("0x" + hex.substr(i, 2));
      if (!v) p.fail("bad hex byte string");
      a.data.push_back(static_cast<std::uint8_t>(*v));
    }
  } else if (verb == "read") {
    a.kind = Action::Kind::read;
    a.target = parse_target(p);
    a.length = p.positive("length");
  } else {
    p.fail("unknown action '" + verb + "'");
  }
  return a;
}

}  // namespace

AdversaryScript parse_adversary(std::string_view text) {
  AdversaryScript s;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
    auto words = split_words(raw);
    if (words.empty()) continue;
    LineParser p(std::move(words), line);
    const std::string head = p.next("statement");
    if (head == "at") {
      Event e;
      e.line = line;
      const std::string kind = p.next("trigger");
      if (kind == "icount") {
        e.trigger.kind = Trigger::Kind::icount;
        const auto n = p.number("instruction count");
        if (n < 0) p.fail("instruction count must be non-negative");
        e.trigger.icount = static_cast<std::uint64_t>(n);
      } else if (kind == "func") {
        e.trigger.kind = Trigger::Kind::site;
        e.trigger.function = p.next("function name");
        if (p.accept("call")) e.trigger.invocation = p.positive("invocation");
        const std::string site = p.next("site");
        if (site == "after_prologue") {
          e.trigger.site = Site::after_prologue;
        } else if (site == "before_epilogue") {
          e.trigger.site = Site::before_epilogue;
        } else if (site == "at_call") {
          e.trigger.site = Site::at_call;
          e.trigger.call_site = p.positive("call-site index");
        } else {
          p.fail("unknown site '" + site + "'");
        }
      } else {
        p.fail("unknown trigger '" + kind + "'");
      }
      e.action = parse_action(p);
      p.end();
      s.events.push_back(std::move(e));
    } else if (head == "replay") {
      Replay r;
      r.line = line;
      p.keyword("func");
      r.function = p.next("function name");
      p.keyword("call");
      r.capture = p.positive("capture invocation");
      p.keyword("into");
      p.keyword("call");
      r.inject = p.positive("inject invocation");
      p.end();
      s.replays.push_back(std::move(r));
    } else {
      p.fail("expected 'at' or 'replay', found '" + head + "'");
    }
  }
  return s;
}

void validate_script(const AdversaryScript& s, const machine::MachineProgram& p) {
  for (const auto& e : s.events) {
    if (e.trigger.kind != Trigger::Kind::site) continue;
    const auto* f = p.find(e.trigger.function);
    if (!f) throw ScriptError(e.line, "unknown function '" + e.trigger.function + "'");
    if (e.trigger.site == Site::at_call && e.trigger.call_site > f->meta.calls.size())
      throw ScriptError(e.line, "function '" + f->name + "' has " + std::to_string(f->meta.calls.size()) +
                                    " call sites, no call site " + std::to_string(e.trigger.call_site));
  }
  for (const auto& r : s.replays)
    if (!p.find(r.function)) throw ScriptError(r.line, "unknown function '" + r.function + "'");
}

}  // namespace regguard::vm
