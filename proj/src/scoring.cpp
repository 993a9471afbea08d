#include "regguard/scoring.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace regguard::scoring {

using analysis::DefKind;
using analysis::UseKind;

SecurityScore security_score(const ir::Variable& v, const analysis::DefUseInfo& du) {
  SecurityScore s;
  const auto it = du.vars.find(v.name);
  if (it == du.vars.end()) return s;
  const analysis::VarDefUse& info = it->second;
  if (v.type == ir::TypeClass::pointer) {
    s.value += 4;
    if (info.has_use(UseKind::branch_cond) || info.has_use(UseKind::call_target)) s.value += 1;
  } else if (v.type == ir::TypeClass::integral) {
    if (info.has_def(DefKind::immediate)) s.value += 2;
    if (info.has_use(UseKind::comparison_operand)) s.value += 1;
  }
  return s;
}

std::map<std::string, SecurityScore> score_function(const ir::Function& f, const analysis::DefUseInfo& du) {
  const auto pinned = analysis::pinned_variables(f);
  std::map<std::string, SecurityScore> out;
  for (const auto& v : f.locals)
    if (!pinned.count(v.name)) out[v.name] = security_score(v, du);
  return out;
}

std::vector<std::uint32_t> rank_candidates(const std::vector<analysis::LiveRange>& ranges,
                                           const std::map<std::string, SecurityScore>& scores,
                                           const analysis::DefUseInfo& /*du*/) {
  std::vector<const analysis::LiveRange*> cands;
  for (const auto& r : ranges)
    if (scores.count(r.variable)) cands.push_back(&r);
  std::sort(cands.begin(), cands.end(), [&](const analysis::LiveRange* a, const analysis::LiveRange* b) {
    const auto sa = scores.at(a->variable).value, sb = scores.at(b->variable).value;
    if (sa != sb) return sa > sb;
    if (a->use_count != b->use_count) return a->use_count > b->use_count;
    if (a->variable != b->variable) return a->variable < b->variable;
    return a->id < b->id;
  });
  std::vector<std::uint32_t> order;
  for (const auto* r : cands) order.push_back(r->id);
  return order;
}

std::string dump_scores(const std::vector<analysis::LiveRange>& ranges,
                        const std::map<std::string, SecurityScore>& scores,
                        const analysis::DefUseInfo& du) {
  std::ostringstream os;
  std::set<std::string> done;
  for (auto id : rank_candidates(ranges, scores, du)) {
    const auto& var = ranges[id].variable;
    if (done.insert(var).second) os << var << ' ' << scores.at(var).value << '\n';
  }
  for (const auto& [var, s] : scores)
    if (done.insert(var).second) os << var << ' ' << s.value << '\n';
  return os.str();
}

}  // namespace regguard::scoring
