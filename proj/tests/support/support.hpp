// Shared fixtures for the test binaries: bundled corpus, random IR functions,
// brute-force oracles.

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "regguard/analysis.hpp"
#include "regguard/ir.hpp"
#include "regguard/vm.hpp"

namespace rgtest {

inline std::string corpus_dir() { return REGGUARD_CORPUS_DIR; }
inline std::string scenario_dir() { return REGGUARD_SCENARIO_DIR; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CorpusProgram {
  std::string name;
  std::string path;
  std::string text;
  std::vector<std::int64_t> inputs;  // from a `# inputs:` header line
};

inline std::vector<CorpusProgram> load_corpus() {
  std::vector<CorpusProgram> out;
  for (const auto& e : std::filesystem::directory_iterator(corpus_dir())) {
    if (e.path().extension() != ".ir") continue;
    CorpusProgram p;
    p.name = e.path().stem().string();
    p.path = e.path().string();
    p.text = read_file(p.path);
    std::istringstream is(p.text);
    std::string line;
    while (std::getline(is, line)) {
      const auto pos = line.find("# inputs:");
      if (pos == std::string::npos) continue;
      std::istringstream vals(line.substr(pos + 9));
      std::int64_t v;
      while (vals >> v) p.inputs.push_back(v);
    }
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

inline regguard::vm::RunOptions options_for(const CorpusProgram& p, std::uint64_t seed = 1) {
  regguard::vm::RunOptions o;
  o.seed = seed;
  o.inputs = p.inputs;
  return o;
}

// ---------------------------------------------------------------------------
// random functions

struct RandomShape {
  int max_vars = 10;
  int max_blocks = 8;
  int max_params = 3;
  int max_block_len = 5;
  bool with_calls = true;
};

/// Source text of a program holding one random function `f` (and a callee
/// `g`). Every block is reachable: block i always has an edge to block i+1.
inline std::string random_program(std::mt19937_64& rng, const RandomShape& shape = {}) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int nparams = pick(0, shape.max_params);
  const int nvars = pick(1, shape.max_vars);
  const int nblocks = pick(1, shape.max_blocks);

  std::vector<std::string> names, ints, ptrs;
  std::ostringstream os;
  os << "func g(x: int) {\nentry:\n  ret x\n}\n\nfunc f(";
  for (int i = 0; i < nparams; ++i) {
    const bool is_ptr = pick(0, 4) == 0;
    const std::string n = "p" + std::to_string(i);
    os << (i ? ", " : "") << n << ": " << (is_ptr ? "ptr" : "int");
    names.push_back(n);
    (is_ptr ? ptrs : ints).push_back(n);
  }
  os << ") {\n";
  for (int i = 0; i < nvars; ++i) {
    const int t = pick(0, 5);
    const std::string n = "x" + std::to_string(i);
    const char* ty = t == 0 ? "ptr" : t == 1 ? "float" : "int";
    os << "  var " << n << " : " << ty << "\n";
    names.push_back(n);
    (t == 0 ? ptrs : ints).push_back(n);
  }
  auto any = [&] { return names[pick(0, static_cast<int>(names.size()) - 1)]; };
  auto any_ptr = [&]() -> std::string {
    return ptrs.empty() ? std::string{} : ptrs[pick(0, static_cast<int>(ptrs.size()) - 1)];
  };
  static const char* kRel[] = {"eq", "ne", "lt", "ge"};
  static const char* kOp[] = {"add", "sub", "mul"};

  for (int b = 0; b < nblocks; ++b) {
    os << "b" << b << ":\n";
    const int len = pick(0, shape.max_block_len);
    for (int i = 0; i < len; ++i) {
      switch (pick(0, 9)) {
        case 0: os << "  " << any() << " = " << pick(-5, 20) << "\n"; break;
        case 1: os << "  " << any() << " = " << any() << "\n"; break;
        case 2: os << "  " << any() << " = " << kOp[pick(0, 2)] << " " << any() << " " << any() << "\n"; break;
        case 3: os << "  " << any() << " = cmp " << kRel[pick(0, 3)] << " " << any() << " " << any() << "\n"; break;
        case 4: os << "  " << any() << " = extern\n"; break;
        case 5:
          if (shape.with_calls) os << "  " << any() << " = call g(" << any() << ")\n";
          break;
        case 6:
          if (auto p = any_ptr(); !p.empty()) os << "  " << p << " = addr g\n";
          break;
        case 7:
          if (auto p = any_ptr(); !p.empty() && shape.with_calls)
            os << "  " << any() << " = icall " << p << "(" << any() << ")\n";
          break;
        case 8:
          if (auto p = any_ptr(); !p.empty()) os << "  " << any() << " = load " << p << " 8\n";
          break;
        default:
          if (auto p = any_ptr(); !p.empty()) os << "  store " << p << " 0 " << any() << "\n";
          break;
      }
    }
    if (b + 1 == nblocks) {
      os << "  ret " << any() << "\n";
    } else {
      const int t = pick(0, 3);
      const std::string other = "b" + std::to_string(pick(0, nblocks - 1));
      const std::string next = "b" + std::to_string(b + 1);
      if (t == 0)
        os << "  jmp " << next << "\n";
      else if (t == 1)
        os << "  br " << any() << " " << other << " " << next << "\n";
      else
        os << "  br " << any() << " " << next << " " << other << "\n";
    }
  }
  os << "}\n\nentry f\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// brute-force liveness: v is live before point p iff some path from p reaches
// a read of v before any write of v.

inline std::vector<regguard::analysis::ProgramPoint> point_successors(const regguard::ir::Function& f,
                                                                      regguard::analysis::ProgramPoint p) {
  const auto& blk = f.blocks[p.block];
  if (p.index + 1 < blk.instructions.size()) return {{p.block, p.index + 1}};
  std::vector<regguard::analysis::ProgramPoint> out;
  for (const auto& s : blk.instructions[p.index].successors())
    out.push_back({static_cast<std::uint32_t>(f.block_index(s)), 0});
  return out;
}

inline bool path_live_from(const regguard::ir::Function& f, std::vector<regguard::analysis::ProgramPoint> work,
                           const std::string& v) {
  std::set<regguard::analysis::ProgramPoint> seen;
  while (!work.empty()) {
    const auto p = work.back();
    work.pop_back();
    if (!seen.insert(p).second) continue;
    const auto& ins = f.blocks[p.block].instructions[p.index];
    const auto uses = ins.value_uses();
    if (std::find(uses.begin(), uses.end(), v) != uses.end()) return true;
    if (ins.def() == v) continue;
    for (const auto& s : point_successors(f, p)) work.push_back(s);
  }
  return false;
}

inline bool oracle_live_before(const regguard::ir::Function& f, regguard::analysis::ProgramPoint p,
                               const std::string& v) {
  return path_live_from(f, {p}, v);
}

inline bool oracle_live_after(const regguard::ir::Function& f, regguard::analysis::ProgramPoint p,
                              const std::string& v) {
  return path_live_from(f, point_successors(f, p), v);
}

}  // namespace rgtest
