#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "lsas/ci_test.hpp"
#include "lsas/mb_discovery.hpp"
#include "lsas/scm.hpp"
#include "lsas/subsets.hpp"

namespace lsas {

// ---------------------------------------------------------------------------
// Decisions

/// X affects Y; Z is a certified adjustment set, S the variable certifying
/// it. theta is NaN when no data was supplied.
struct Effect {
    double theta = std::numeric_limits<double>::quiet_NaN();
    NodeSet z;
    NodeId s = 0;
};
struct NoEffect {};
struct Unknown {};

using Decision = std::variant<Effect, NoEffect, Unknown>;

enum class DecisionKind { Effect, NoEffect, Unknown };

inline DecisionKind kind_of(const Decision& d) {
    if (std::holds_alternative<Effect>(d)) return DecisionKind::Effect;
    if (std::holds_alternative<NoEffect>(d)) return DecisionKind::NoEffect;
    return DecisionKind::Unknown;
}

inline const char* to_string(DecisionKind k) {
    switch (k) {
        case DecisionKind::Effect: return "effect";
        case DecisionKind::NoEffect: return "no_effect";
        case DecisionKind::Unknown: return "unknown";
    }
    return "?";
}

enum class Rule { None, R1, R2i, R2ii };

inline const char* to_string(Rule r) {
    switch (r) {
        case Rule::None: return "none";
        case Rule::R1: return "R1";
        case Rule::R2i: return "R2i";
        case Rule::R2ii: return "R2ii";
    }
    return "?";
}

struct Firing {
    Rule rule = Rule::None;
    NodeId s = 0;
    NodeSet z;
};

struct SearchTrace {
    std::size_t n_tests = 0;
    std::size_t pairs_examined = 0;
    Rule rule_fired = Rule::None;
    std::chrono::nanoseconds elapsed{0};
    /// Every rule firing observed before the search returned.
    std::vector<Firing> firings;
    /// Queries declined by a capped tester; the rule was treated as not
    /// applicable.
    std::size_t refusals = 0;
    /// Blankets used by LSAS (empty for EHS).
    NodeSet mb_x, mb_y;
};

struct SearchOptions {
    /// Largest adjustment-set candidate |Z|; nullopt searches every subset.
    std::optional<std::size_t> cap;
    /// Return on the first R1 firing. When false, an R1 firing records its
    /// estimate and the loop continues (a later R1 firing overwrites it).
    bool early_return = true;
    /// Keep enumerating after the decision is fixed so that `firings` lists
    /// every certificate. The decision is unchanged; n_tests grows.
    bool collect_all = false;
};

// ---------------------------------------------------------------------------
// Rules

namespace detail {

/// Runs a query; a cap refusal yields nullopt and bumps `refusals`.
inline std::optional<bool> independent_or_refused(CITester& t, NodeId a, NodeId b, const NodeSet& z,
                                                  std::size_t* refusals) {
    try {
        return t.test(a, b, z).independent;
    } catch (const CapRefusal&) {
        if (refusals) ++*refusals;
        return std::nullopt;
    }
}

}  // namespace detail

/// R1: S is dependent on Y given Z, and independent of Y given Z ∪ {X}.
/// Certifies Z as an adjustment set for (X, Y).
inline bool check_r1(CITester& tester, NodeId s, const NodeSet& z, const NodePair& pair,
                     std::size_t* refusals = nullptr) {
    if (contains(z, s)) throw CiError("R1 candidate S must not be in Z");
    auto first = detail::independent_or_refused(tester, s, pair.outcome, z, refusals);
    if (!first || *first) return false;
    auto second = detail::independent_or_refused(tester, s, pair.outcome, with(z, pair.treatment), refusals);
    return second && *second;
}

/// Per-run cache of R2 clause (i), which does not depend on S.
using R2Memo = std::map<NodeSet, bool>;

/// R2: (i) X independent of Y given Z, or (ii) S dependent on X given Z and
/// S independent of Y given Z. Returns which clause fired. Clause (ii) is
/// skipped when S is in Z.
inline Rule check_r2_clause(CITester& tester, NodeId s, const NodeSet& z, const NodePair& pair, R2Memo* memo = nullptr,
                            std::size_t* refusals = nullptr) {
    std::optional<bool> clause_i;
    if (memo)
        if (auto it = memo->find(z); it != memo->end()) clause_i = it->second;
    if (!clause_i) {
        clause_i = detail::independent_or_refused(tester, pair.treatment, pair.outcome, z, refusals);
        if (memo && clause_i) memo->emplace(z, *clause_i);
    }
    if (clause_i.value_or(false)) return Rule::R2i;
    if (contains(z, s)) return Rule::None;
    auto sx = detail::independent_or_refused(tester, s, pair.treatment, z, refusals);
    if (!sx || *sx) return Rule::None;
    auto sy = detail::independent_or_refused(tester, s, pair.outcome, z, refusals);
    return (sy && *sy) ? Rule::R2ii : Rule::None;
}

inline bool check_r2(CITester& tester, NodeId s, const NodeSet& z, const NodePair& pair, R2Memo* memo = nullptr,
                     std::size_t* refusals = nullptr) {
    return check_r2_clause(tester, s, z, pair, memo, refusals) != Rule::None;
}

// ---------------------------------------------------------------------------
// Estimation

class EstimationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// OLS of Y on {1, X} ∪ Z; returns X's coefficient. Indices are dataset
/// column indices.
inline double estimate_effect(const Dataset& data, const NodePair& pair, const NodeSet& z) {
    const std::size_t p = data.cols();
    if (pair.treatment >= p || pair.outcome >= p) throw EstimationError("treatment/outcome column out of range");
    for (NodeId v : z)
        if (v >= p || v == pair.treatment || v == pair.outcome)
            throw EstimationError("adjustment set must exclude treatment and outcome");
    if (data.rows() <= z.size() + 2) throw EstimationError("too few samples for the regression");

    const auto n = static_cast<Eigen::Index>(data.rows());
    const auto k = static_cast<Eigen::Index>(z.size() + 2);
    const auto& v = data.values();
    Eigen::MatrixXd design(n, k);
    design.col(0).setOnes();
    design.col(1) = v.col(static_cast<Eigen::Index>(pair.treatment));
    for (std::size_t i = 0; i < z.size(); ++i)
        design.col(static_cast<Eigen::Index>(i + 2)) = v.col(static_cast<Eigen::Index>(z[i]));
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < k) throw EstimationError("rank-deficient design matrix");
    const Eigen::VectorXd beta = qr.solve(v.col(static_cast<Eigen::Index>(pair.outcome)));
    return beta(1);
}

/// Population counterpart of estimate_effect from a covariance matrix.
inline double population_effect(const Eigen::MatrixXd& cov, const NodePair& pair, const NodeSet& z) {
    std::vector<Eigen::Index> reg{static_cast<Eigen::Index>(pair.treatment)};
    for (NodeId v : z) reg.push_back(static_cast<Eigen::Index>(v));
    const auto k = static_cast<Eigen::Index>(reg.size());
    Eigen::MatrixXd sxx(k, k);
    Eigen::VectorXd sxy(k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) sxx(a, b) = cov(reg[a], reg[b]);
        sxy(a) = cov(reg[a], static_cast<Eigen::Index>(pair.outcome));
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(sxx);
    if (ldlt.info() != Eigen::Success) throw EstimationError("singular regressor covariance");
    return ldlt.solve(sxy)(0);
}

// ---------------------------------------------------------------------------
// Search

namespace detail {

/// Shared R1/R2 loop. S runs over `s_candidates` in order; Z over subsets of
/// `z_universe` by size then lexicographically. R1 then R2 for each (S, Z).
/// With no S candidates only R2 clause (i) can be checked.
inline Decision rule_search(CITester& tester, const Dataset* data, const NodePair& pair, const NodeSet& s_candidates,
                            const NodeSet& z_universe, const SearchOptions& opt, SearchTrace& trace) {
    const std::size_t cap = opt.cap.value_or(z_universe.size());
    R2Memo memo;
    std::optional<Decision> decision;

    auto make_effect = [&](NodeId s, const NodeSet& z) {
        Effect e;
        e.s = s;
        e.z = z;
        if (data) e.theta = estimate_effect(*data, pair, z);
        return e;
    };
    // A later firing may replace the decision only in loop-to-exhaustion
    // mode, and only while the current decision is an R1 estimate.
    auto replaceable = [&] { return !decision || (!opt.early_return && std::holds_alternative<Effect>(*decision)); };

    // Returns true when the search should stop.
    auto visit = [&](NodeId s, const NodeSet& z) {
        ++trace.pairs_examined;
        if (!contains(z, s) && check_r1(tester, s, z, pair, &trace.refusals)) {
            trace.firings.push_back({Rule::R1, s, z});
            if (replaceable()) {
                decision = make_effect(s, z);
                trace.rule_fired = Rule::R1;
            }
            if (opt.early_return && !opt.collect_all) return true;
        }
        const Rule r2 = check_r2_clause(tester, s, z, pair, &memo, &trace.refusals);
        if (r2 != Rule::None) {
            trace.firings.push_back({r2, s, z});
            if (replaceable()) {
                decision = NoEffect{};
                trace.rule_fired = r2;
            }
            if (!opt.collect_all) return true;
        }
        return false;
    };

    if (s_candidates.empty()) {
        for_each_subset(z_universe, cap, [&](const NodeSet& z) {
            ++trace.pairs_examined;
            auto r = independent_or_refused(tester, pair.treatment, pair.outcome, z, &trace.refusals);
            if (r && *r) {
                trace.firings.push_back({Rule::R2i, 0, z});
                if (!decision) {
                    decision = NoEffect{};
                    trace.rule_fired = Rule::R2i;
                }
                return !opt.collect_all;
            }
            return false;
        });
    } else {
        for (NodeId s : s_candidates)
            if (for_each_subset(z_universe, cap, [&](const NodeSet& z) { return visit(s, z); })) break;
    }
    return decision.value_or(Unknown{});
}

inline void check_alignment(const CITester& tester, const Dataset* data, const NodePair& pair,
                            const NodeSet& all_vars) {
    if (data && data->columns() != tester.variable_names())
        throw CiError("dataset columns do not match the tester's variables");
    if (!contains(all_vars, pair.treatment) || !contains(all_vars, pair.outcome))
        throw CiError("treatment and outcome must be among the variables");
    for (NodeId v : all_vars)
        if (v >= tester.num_variables()) throw CiError("variable index out of range");
}

}  // namespace detail

/// Local search: discover MB(X) and MB(Y) by total conditioning (uncapped),
/// then apply R1/R2 with S in MB(X) ∖ {Y} and Z ⊆ MB(Y) ∖ {X}.
inline std::pair<Decision, SearchTrace> run_lsas(CITester& tester, const Dataset* data, const NodePair& pair,
                                                 const NodeSet& all_vars, const SearchOptions& opt = {}) {
    detail::check_alignment(tester, data, pair, all_vars);
    const auto start = std::chrono::steady_clock::now();
    const std::size_t before = tester.query_count();
    SearchTrace trace;

    auto [mb_x, mb_y] = discover_pair_mbs(tester.uncapped(), all_vars, pair);
    trace.mb_x = mb_x.members;
    trace.mb_y = mb_y.members;
    const NodeSet s_candidates = without(mb_x.members, pair.outcome);
    const NodeSet z_universe = without(mb_y.members, pair.treatment);

    Decision d = detail::rule_search(tester, data, pair, s_candidates, z_universe, opt, trace);
    trace.n_tests = tester.query_count() - before;
    trace.elapsed = std::chrono::steady_clock::now() - start;
    return {std::move(d), std::move(trace)};
}

/// Global search baseline: the same rules with S over every covariate and
/// Z over subsets of all covariates.
inline std::pair<Decision, SearchTrace> run_ehs(CITester& tester, const Dataset* data, const NodePair& pair,
                                                const NodeSet& all_vars, const SearchOptions& opt = {}) {
    detail::check_alignment(tester, data, pair, all_vars);
    const auto start = std::chrono::steady_clock::now();
    const std::size_t before = tester.query_count();
    SearchTrace trace;

    const NodeSet covariates = without(without(all_vars, pair.treatment), pair.outcome);
    Decision d = detail::rule_search(tester, data, pair, covariates, covariates, opt, trace);
    trace.n_tests = tester.query_count() - before;
    trace.elapsed = std::chrono::steady_clock::now() - start;
    return {std::move(d), std::move(trace)};
}

}  // namespace lsas
