// Python bindings: compile, run, attack, overhead, scores and the MAC.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "regguard/mac.hpp"
#include "regguard/pipeline.hpp"
#include "regguard/vm.hpp"

namespace py = pybind11;
using namespace regguard;

namespace {

pipeline::Profile make_profile(const std::string& name, std::optional<unsigned> regs, std::optional<std::string> mode,
                               std::optional<bool> skip_leaf, std::optional<bool> protect_caller_saved) {
  auto p = pipeline::preset(name);
  if (regs) p.regs.n_var_regs = *regs;
  if (mode) {
    if (*mode == "chained")
      p.instrument.mode = instrument::Mode::chained;
    else if (*mode == "independent")
      p.instrument.mode = instrument::Mode::independent;
    else
      throw std::invalid_argument("unknown mode '" + *mode + "'");
  }
  if (skip_leaf) p.instrument.skip_leaf = *skip_leaf;
  if (protect_caller_saved) p.instrument.protect_caller_saved = *protect_caller_saved;
  p.regs.validate();
  return p;
}

vm::RunOptions run_options(const std::vector<std::int64_t>& inputs, std::optional<std::uint64_t> seed, bool shadow,
                           bool audit) {
  vm::RunOptions o;
  o.inputs = inputs;
  o.seed = seed;
  o.shadow_liveness = shadow;
  o.audit = audit;
  return o;
}

mac::MacKey key_from(py::bytes key) {
  const std::string k = key;
  if (k.size() != 16) throw std::invalid_argument("key must be 16 bytes");
  std::array<std::uint8_t, 16> b{};
  std::copy(k.begin(), k.end(), b.begin());
  return mac::MacKey::from_bytes(b);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "regguard core bindings";

  py::register_exception<ir::ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<vm::ScriptError>(m, "ScriptError", PyExc_ValueError);
  py::register_exception<regalloc::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def(
      "siphash24", [](py::bytes key, py::bytes message) {
        const std::string msg = message;
        return mac::siphash24(key_from(key),
                              std::span(reinterpret_cast<const std::uint8_t*>(msg.data()), msg.size()));
      },
      py::arg("key"), py::arg("message"));
  m.def(
      "mac_words", [](py::bytes key, const std::vector<std::uint64_t>& words) {
        return mac::mac_words(key_from(key), words).value;
      },
      py::arg("key"), py::arg("words"));
  m.def("selftest", [] {
    const auto r = mac::run_selftest();
    return py::make_tuple(r.passed, r.failed);
  });
  m.def("presets", &pipeline::preset_names);

  py::class_<pipeline::Compiled, std::shared_ptr<pipeline::Compiled>>(m, "Compiled")
      .def_property_readonly("profile", [](const pipeline::Compiled& c) { return c.profile.name; })
      .def("listing", [](const pipeline::Compiled& c) { return machine::listing(c.machine); })
      .def("manifest", &pipeline::manifest_json)
      .def("dump_scores", &pipeline::dump_scores)
      .def("dump_alloc", &pipeline::dump_alloc)
      .def("dump_liveness", &pipeline::dump_liveness)
      .def("scores",
           [](const pipeline::Compiled& c) {
             std::map<std::string, std::map<std::string, std::uint32_t>> out;
             for (const auto& f : c.functions) {
               auto& fs = out[f.name];
               for (const auto& [v, s] : f.scores) fs[v] = s.value;
             }
             return out;
           })
      .def("mac_instructions", [](const pipeline::Compiled& c) {
        std::size_t n = 0;
        for (const auto& i : c.machine.code) n += machine::is_mac(i.op);
        return n;
      });

  py::class_<vm::RunOutcome>(m, "Outcome")
      .def_property_readonly("status", [](const vm::RunOutcome& r) { return std::string(vm::to_string(r.status)); })
      .def_readonly("value", &vm::RunOutcome::value)
      .def_readonly("violation_function", &vm::RunOutcome::violation_function)
      .def_readonly("notes", &vm::RunOutcome::notes)
      .def_readonly("shadow_violations", &vm::RunOutcome::shadow_violations)
      .def_readonly("audit_violations", &vm::RunOutcome::audit_violations)
      .def_property_readonly("exit_code", &vm::RunOutcome::exit_code)
      .def_property_readonly("corrupted", &vm::RunOutcome::corrupted)
      .def_property_readonly("instructions", [](const vm::RunOutcome& r) { return r.counters.instructions; })
      .def("verdict", &vm::RunOutcome::verdict)
      .def("summary", &vm::RunOutcome::summary_line)
      .def("json", &vm::RunOutcome::to_json);

  m.def(
      "compile",
      [](const std::string& source, const std::string& profile, std::optional<unsigned> regs,
         std::optional<std::string> mode, std::optional<bool> skip_leaf, std::optional<bool> protect_caller_saved) {
        return std::make_shared<pipeline::Compiled>(pipeline::compile_source(
            source, make_profile(profile, regs, std::move(mode), skip_leaf, protect_caller_saved)));
      },
      py::arg("source"), py::arg("profile") = "poc", py::arg("regs") = py::none(), py::arg("mode") = py::none(),
      py::arg("skip_leaf") = py::none(), py::arg("protect_caller_saved") = py::none());

  m.def(
      "run",
      [](const pipeline::Compiled& c, const std::vector<std::int64_t>& inputs, std::optional<std::uint64_t> seed,
         bool shadow, bool audit) { return vm::run(c.machine, {}, run_options(inputs, seed, shadow, audit)); },
      py::arg("compiled"), py::arg("inputs") = std::vector<std::int64_t>{}, py::arg("seed") = py::none(),
      py::arg("shadow") = false, py::arg("audit") = false);

  m.def(
      "attack",
      [](const pipeline::Compiled& c, const std::string& script, const std::vector<std::int64_t>& inputs,
         std::optional<std::uint64_t> seed) {
        const auto s = vm::parse_adversary(script);
        vm::validate_script(s, c.machine);
        return vm::run(c.machine, s, run_options(inputs, seed, false, false));
      },
      py::arg("compiled"), py::arg("script"), py::arg("inputs") = std::vector<std::int64_t>{},
      py::arg("seed") = py::none());

  m.def(
      "overhead",
      [](const pipeline::Compiled& instrumented, const pipeline::Compiled& plain,
         const std::vector<std::int64_t>& inputs, std::optional<std::uint64_t> seed) {
        const auto r = vm::measure_overhead(instrumented.machine, plain.machine, run_options(inputs, seed, false, false));
        py::dict d;
        d["ratio"] = r.ratio;
        d["mac_share"] = r.mac_share;
        d["plain_cost"] = r.plain_cost;
        d["instrumented_cost"] = r.instrumented_cost;
        d["mac_cost"] = r.mac_cost;
        d["results_match"] = r.results_match;
        return d;
      },
      py::arg("instrumented"), py::arg("plain"), py::arg("inputs") = std::vector<std::int64_t>{},
      py::arg("seed") = py::none());
}
