// Security scores and allocation priority order.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "regguard/analysis.hpp"
#include "regguard/ir.hpp"

namespace regguard::scoring {

struct SecurityScore {
  std::uint32_t value = 1;
  friend auto operator<=>(const SecurityScore&, const SecurityScore&) = default;
};

SecurityScore security_score(const ir::Variable& v, const analysis::DefUseInfo& du);

/// Scores for every scorable variable of `f`: locals that are not pinned.
/// Params are excluded; their registers are fixed by the calling convention.
std::map<std::string, SecurityScore> score_function(const ir::Function& f, const analysis::DefUseInfo& du);

/// Range ids ordered by descending score, then descending range use count,
/// then variable name, then range id. Ranges whose variable has no score are
/// left out.
std::vector<std::uint32_t> rank_candidates(const std::vector<analysis::LiveRange>& ranges,
                                           const std::map<std::string, SecurityScore>& scores,
                                           const analysis::DefUseInfo& du);

/// `variable score` lines, one per scored variable, in rank order of each
/// variable's best-ranked range (unranked variables follow by name).
std::string dump_scores(const std::vector<analysis::LiveRange>& ranges,
                        const std::map<std::string, SecurityScore>& scores,
                        const analysis::DefUseInfo& du);

}  // namespace regguard::scoring
