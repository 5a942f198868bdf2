#pragma once

#include <utility>

#include "lsas/ci_test.hpp"

namespace lsas {

struct MBResult {
    NodeId target = 0;
    NodeSet members;
    std::size_t queries_used = 0;
};

/// Total conditioning: v is in the blanket of `target` iff the two are
/// dependent given every other variable. One query per candidate.
///
/// The conditioning sets have |all_vars| - 2 members, so callers normally pass
/// an uncapped tester; a capped one throws CapRefusal.
inline MBResult total_conditioning_mb(CITester& tester, const NodeSet& all_vars, NodeId target) {
    if (all_vars.size() < 2) throw CiError("Markov-blanket discovery needs at least two variables");
    if (!contains(all_vars, target)) throw CiError("target is not among the variables");
    MBResult out;
    out.target = target;
    const NodeSet others = without(all_vars, target);
    for (NodeId v : others) {
        ++out.queries_used;
        if (!tester.independent(target, v, without(others, v))) out.members.push_back(v);
    }
    return out;
}

/// Blankets of both X and Y. The (X, Y) query is asked once and shared, so
/// the pair costs 2|V| - 3 queries.
inline std::pair<MBResult, MBResult> discover_pair_mbs(CITester& tester, const NodeSet& all_vars,
                                                       const NodePair& pair) {
    const NodeId x = pair.treatment, y = pair.outcome;
    if (!contains(all_vars, x) || !contains(all_vars, y))
        throw CiError("treatment and outcome must be among the variables");
    MBResult mb_x = total_conditioning_mb(tester, all_vars, x);
    const bool xy_dependent = contains(mb_x.members, y);

    MBResult mb_y;
    mb_y.target = y;
    const NodeSet others = without(all_vars, y);
    for (NodeId v : others) {
        if (v == x) {
            if (xy_dependent) mb_y.members.push_back(v);
            continue;
        }
        ++mb_y.queries_used;
        if (!tester.independent(y, v, without(others, v))) mb_y.members.push_back(v);
    }
    return {std::move(mb_x), std::move(mb_y)};
}

}  // namespace lsas
