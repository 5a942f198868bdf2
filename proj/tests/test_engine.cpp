#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "lsas/engine.hpp"
#include "lsas/fixtures.hpp"
#include "oracles.hpp"

using namespace lsas;

namespace {

struct Outcome {
    Decision decision;
    SearchTrace trace;
};

Outcome oracle_lsas(const Fixture& f, SearchOptions opt = {}) {
    const MixedGraph g = f.mag();
    OracleTester t(g);
    if (!opt.cap) opt.cap = f.cap;
    auto [d, tr] = run_lsas(t, nullptr, NodePair(g.index(f.treatment), g.index(f.outcome)), g.all_nodes(), opt);
    return {d, tr};
}

Outcome oracle_ehs(const Fixture& f, SearchOptions opt = {}) {
    const MixedGraph g = f.mag();
    OracleTester t(g);
    if (!opt.cap) opt.cap = f.cap;
    auto [d, tr] = run_ehs(t, nullptr, NodePair(g.index(f.treatment), g.index(f.outcome)), g.all_nodes(), opt);
    return {d, tr};
}

NodeSet ids(const MixedGraph& g, std::initializer_list<const char*> names) {
    std::vector<NodeId> v;
    for (const char* n : names) v.push_back(g.index(n));
    return make_set(std::move(v));
}

bool has_firing(const SearchTrace& tr, Rule r, NodeId s, const NodeSet& z) {
    for (const auto& f : tr.firings)
        if (f.rule == r && f.s == s && f.z == z) return true;
    return false;
}

}  // namespace

TEST(Rules, NineCovariateExamples) {
    const MixedGraph g = builtin_fixture("fig4").mag();
    OracleTester t(g);
    const NodePair p(g.index("X"), g.index("Y"));
    EXPECT_TRUE(check_r1(t, g.index("V7"), ids(g, {"V5", "V6", "V8"}), p));
    EXPECT_FALSE(check_r1(t, g.index("V7"), {}, p));
    EXPECT_THROW(check_r1(t, g.index("V7"), ids(g, {"V7"}), p), CiError);
    // an effect is present, so R2 never fires
    std::size_t checked = 0;
    for (NodeId s : without(without(g.all_nodes(), p.treatment), p.outcome))
        for_each_subset(without(without(g.all_nodes(), p.treatment), p.outcome), 3, [&](const NodeSet& z) {
            EXPECT_FALSE(check_r2(t, s, z, p));
            ++checked;
            return false;
        });
    EXPECT_GT(checked, 1000u);
}

TEST(Rules, R2Clauses) {
    const MixedGraph g = builtin_fixture("fig3-no-edge").mag();
    OracleTester t(g);
    const NodePair p(g.index("X"), g.index("Y"));
    EXPECT_EQ(check_r2_clause(t, g.index("V6"), ids(g, {"V1", "V2"}), p), Rule::R2i);
    const MixedGraph h = builtin_fixture("fig3-no-edge-V2-latent").mag();
    OracleTester th(h);
    const NodePair ph(h.index("X"), h.index("Y"));
    EXPECT_EQ(check_r2_clause(th, h.index("V6"), ids(h, {"V1"}), ph), Rule::R2ii);
    // clause (ii) does not apply when S is conditioned on
    EXPECT_EQ(check_r2_clause(th, h.index("V1"), ids(h, {"V1"}), ph), Rule::None);
}

TEST(Rules, R2MemoSkipsRepeatedClauseOne) {
    const MixedGraph g = builtin_fixture("fig4").mag();
    const NodePair p(g.index("X"), g.index("Y"));
    OracleTester plain(g);
    check_r2(plain, g.index("V2"), {}, p);
    OracleTester t(g);
    R2Memo memo;
    check_r2(t, g.index("V1"), {}, p, &memo);
    const std::size_t after_first = t.query_count();
    check_r2(t, g.index("V2"), {}, p, &memo);
    EXPECT_EQ(memo.size(), 1u);
    EXPECT_EQ(t.query_count() - after_first, plain.query_count() - 1);
}

TEST(WorkedFixtures, SevenCovariateEffect) {
    const Fixture f = builtin_fixture("fig3");
    const MixedGraph g = f.mag();
    const Outcome r = oracle_lsas(f);
    ASSERT_EQ(kind_of(r.decision), DecisionKind::Effect);
    const auto& e = std::get<Effect>(r.decision);
    EXPECT_EQ(e.s, g.index("V6"));
    EXPECT_EQ(e.z, ids(g, {"V1", "V2"}));
    EXPECT_TRUE(std::isnan(e.theta));
    EXPECT_EQ(r.trace.rule_fired, Rule::R1);
    EXPECT_EQ(r.trace.mb_y, ids(g, {"X", "V1", "V2", "V3", "V4", "V6"}));
    EXPECT_TRUE(is_valid_adjustment(g, f.pair(), e.z));
    const Outcome ehs = oracle_ehs(f);
    EXPECT_EQ(kind_of(ehs.decision), DecisionKind::Effect);
    EXPECT_LT(r.trace.n_tests, ehs.trace.n_tests);
}

TEST(WorkedFixtures, CertifiesV5V6V8) {
    const Fixture f = builtin_fixture("fig4");
    const MixedGraph g = f.mag();
    SearchOptions all;
    all.collect_all = true;
    const Outcome r = oracle_lsas(f, all);
    ASSERT_EQ(kind_of(r.decision), DecisionKind::Effect);
    EXPECT_TRUE(has_firing(r.trace, Rule::R1, g.index("V7"), ids(g, {"V5", "V6", "V8"})));
    for (const auto& fr : r.trace.firings) {
        EXPECT_EQ(fr.rule, Rule::R1);
        EXPECT_TRUE(is_valid_adjustment(g, f.pair(), fr.z));
    }
    const Outcome first = oracle_lsas(f);
    EXPECT_EQ(std::get<Effect>(first.decision).z, ids(g, {"V5", "V6", "V8"}));
    EXPECT_LT(first.trace.n_tests, oracle_ehs(f).trace.n_tests);
}

TEST(WorkedFixtures, SmallConfoundedGraphs) {
    for (const char* name : {"fig1a", "fig1b", "fig1c", "fig8a", "fig8b"}) {
        const Fixture f = builtin_fixture(name);
        const Outcome r = oracle_lsas(f);
        ASSERT_EQ(kind_of(r.decision), DecisionKind::Effect) << name;
        EXPECT_TRUE(is_valid_adjustment(f.mag(), f.pair(), std::get<Effect>(r.decision).z)) << name;
    }
}

TEST(WorkedFixtures, NoEffectAndUnknown) {
    const Outcome r2i = oracle_lsas(builtin_fixture("fig3-no-edge"));
    EXPECT_EQ(kind_of(r2i.decision), DecisionKind::NoEffect);
    EXPECT_EQ(r2i.trace.rule_fired, Rule::R2i);

    const Fixture f = builtin_fixture("fig3-no-edge-V2-latent");
    const MixedGraph g = f.mag();
    SearchOptions all;
    all.collect_all = true;
    const Outcome r2ii = oracle_lsas(f, all);
    EXPECT_EQ(kind_of(r2ii.decision), DecisionKind::NoEffect);
    EXPECT_EQ(r2ii.trace.rule_fired, Rule::R2ii);
    EXPECT_TRUE(has_firing(r2ii.trace, Rule::R2ii, g.index("V6"), ids(g, {"V1"})));

    EXPECT_EQ(kind_of(oracle_lsas(builtin_fixture("fig10")).decision), DecisionKind::Unknown);
    EXPECT_EQ(kind_of(oracle_ehs(builtin_fixture("fig10")).decision), DecisionKind::Unknown);
    EXPECT_EQ(kind_of(oracle_lsas(builtin_fixture("m-structure")).decision), DecisionKind::Unknown);
}

TEST(WorkedFixtures, TwoNodesIsUnknown) {
    const MixedGraph g = graph_from_arcs(GraphKind::MAG, {"X", "Y"}, {"X -> Y"});
    OracleTester t(g);
    auto [d, tr] = run_lsas(t, nullptr, {0, 1}, g.all_nodes());
    EXPECT_EQ(kind_of(d), DecisionKind::Unknown);
    EXPECT_EQ(tr.n_tests, t.query_count());
    OracleTester t2(g);
    EXPECT_EQ(kind_of(run_ehs(t2, nullptr, {0, 1}, g.all_nodes()).first), DecisionKind::Unknown);
}

TEST(Search, SoundAndCompleteAgainstGlobalSearch) {
    std::size_t effects = 0, no_effects = 0, unknowns = 0;
    for (std::uint64_t seed = 0; seed < 150; ++seed) {
        const auto ld = oracle::random_latent_dag(8 + seed % 3, 3.0, 1 + seed % 2, seed);
        const NodePair dp = last_two_in_causal_order(ld.dag);
        const MixedGraph g = latent_project(ld.dag, ld.observed);
        auto pos = [&](NodeId v) {
            return static_cast<NodeId>(std::lower_bound(ld.observed.begin(), ld.observed.end(), v) - ld.observed.begin());
        };
        const NodePair p(pos(dp.treatment), pos(dp.outcome));
        SearchOptions opt;
        opt.cap = 3;
        OracleTester t1(g), t2(g);
        auto [dl, trl] = run_lsas(t1, nullptr, p, g.all_nodes(), opt);
        auto [de, tre] = run_ehs(t2, nullptr, p, g.all_nodes(), opt);
        ASSERT_EQ(kind_of(dl), kind_of(de)) << "seed " << seed;
        EXPECT_EQ(trl.n_tests, t1.query_count());
        switch (kind_of(dl)) {
            case DecisionKind::Effect:
                ++effects;
                EXPECT_TRUE(oracle::valid_adjustment(g, p, std::get<Effect>(dl).z)) << seed;
                EXPECT_TRUE(oracle::valid_adjustment(g, p, std::get<Effect>(de).z)) << seed;
                EXPECT_TRUE(contains(ancestors(g, p.outcome), p.treatment));
                break;
            case DecisionKind::NoEffect:
                ++no_effects;
                EXPECT_FALSE(contains(ancestors(ld.dag, dp.outcome), dp.treatment)) << seed;
                break;
            case DecisionKind::Unknown: ++unknowns; break;
        }
    }
    EXPECT_GT(effects, 10u);
    EXPECT_GT(no_effects, 10u);
}

TEST(Search, LocalityCheaperOnLargerFixtures) {
    for (const char* name : {"fig3", "fig4"}) {
        const Fixture f = builtin_fixture(name);
        const Outcome l = oracle_lsas(f), e = oracle_ehs(f);
        ASSERT_EQ(kind_of(l.decision), DecisionKind::Effect) << name;
        EXPECT_LT(3 * l.trace.n_tests, e.trace.n_tests + e.trace.n_tests / 2) << name;
    }
}

TEST(Search, SmallGraphsCanFavourGlobalSearch) {
    // fig8a: the global search certifies with its very first S
    const Fixture f = builtin_fixture("fig8a");
    const Outcome l = oracle_lsas(f), e = oracle_ehs(f);
    EXPECT_EQ(kind_of(e.decision), DecisionKind::Effect);
    EXPECT_GT(l.trace.n_tests, e.trace.n_tests);
}

TEST(Search, GlobalSearchCanStopSoonerOnNoEffect) {
    // blanket discovery costs 2|V| - 3 queries up front, while the global
    // search reaches R2(i) within its first few Z
    const Fixture f = builtin_fixture("fig3-no-edge");
    const Outcome l = oracle_lsas(f), e = oracle_ehs(f);
    EXPECT_LT(set_union(l.trace.mb_x, l.trace.mb_y).size(), f.mag().size());
    EXPECT_EQ(kind_of(e.decision), DecisionKind::NoEffect);
    EXPECT_GT(l.trace.n_tests, e.trace.n_tests);
}

TEST(Search, ExhaustModeUnderOracle) {
    const Fixture f = builtin_fixture("fig4");
    SearchOptions ex;
    ex.early_return = false;
    const Outcome first = oracle_lsas(f), last = oracle_lsas(f, ex);
    ASSERT_EQ(kind_of(last.decision), DecisionKind::Effect);
    EXPECT_GT(last.trace.n_tests, first.trace.n_tests);
    ASSERT_FALSE(last.trace.firings.empty());
    // a later R1 firing overwrites the estimate
    EXPECT_EQ(std::get<Effect>(last.decision).z, last.trace.firings.back().z);
    for (const auto& fr : last.trace.firings) EXPECT_TRUE(is_valid_adjustment(f.mag(), f.pair(), fr.z));
    // R2 stops the loop immediately
    const Outcome no = oracle_lsas(builtin_fixture("fig3-no-edge"), ex);
    EXPECT_EQ(kind_of(no.decision), DecisionKind::NoEffect);
    EXPECT_EQ(no.trace.firings.size(), 1u);
}

TEST(Search, CollectAllKeepsDecision) {
    for (const auto& name : builtin_fixture_names()) {
        SearchOptions all;
        all.collect_all = true;
        const Fixture f = builtin_fixture(name);
        const Outcome a = oracle_lsas(f), b = oracle_lsas(f, all);
        EXPECT_EQ(kind_of(a.decision), kind_of(b.decision)) << name;
        EXPECT_GE(b.trace.n_tests, a.trace.n_tests);
        if (!a.trace.firings.empty()) {
            EXPECT_EQ(b.trace.firings.front().s, a.trace.firings.front().s);
            EXPECT_EQ(b.trace.firings.front().z, a.trace.firings.front().z);
        }
    }
}

TEST(Search, CapBoundsAdjustmentSets) {
    const Fixture f = builtin_fixture("fig4");
    SearchOptions small;
    small.cap = 2;
    const Outcome r = oracle_lsas(f, small);
    if (auto* e = std::get_if<Effect>(&r.decision)) EXPECT_LE(e->z.size(), 2u);
    EXPECT_NE(kind_of(r.decision), DecisionKind::NoEffect);
    for (const auto& fr : r.trace.firings) EXPECT_LE(fr.z.size(), 2u);
}

TEST(Search, CappedTesterRefusalsAreNotApplicable) {
    const Fixture f = builtin_fixture("fig4");
    const MixedGraph g = f.mag();
    OracleTester base(g);
    CappedTester capped(base, 3);
    SearchOptions opt;
    opt.cap = 3;
    auto [d, tr] = run_lsas(capped, nullptr, f.pair(), g.all_nodes(), opt);
    // |Z| = 3 plus X exceeds the tester cap, so the {V5, V6, V8} certificate is refused
    EXPECT_GT(tr.refusals, 0u);
    EXPECT_EQ(tr.n_tests, base.query_count());
    if (auto* e = std::get_if<Effect>(&d)) EXPECT_TRUE(is_valid_adjustment(g, f.pair(), e->z));
    EXPECT_NE(kind_of(d), DecisionKind::NoEffect);
}

TEST(Search, DeterministicTraces) {
    const Fixture f = builtin_fixture("fig4");
    const Outcome a = oracle_lsas(f), b = oracle_lsas(f);
    EXPECT_EQ(a.trace.n_tests, b.trace.n_tests);
    EXPECT_EQ(a.trace.pairs_examined, b.trace.pairs_examined);
    EXPECT_EQ(std::get<Effect>(a.decision).z, std::get<Effect>(b.decision).z);
}

TEST(Search, RejectsMisalignedInputs) {
    const MixedGraph g = builtin_fixture("fig3").mag();
    OracleTester t(g);
    EXPECT_THROW(run_lsas(t, nullptr, {0, 99}, g.all_nodes()), CiError);
    const LinearSCM scm = assign_weights(random_dag(3, 2.0, 1), 1);
    const Dataset d = sample(scm, 10, 1);
    EXPECT_THROW(run_lsas(t, &d, {0, 1}, g.all_nodes()), CiError);
}

TEST(Estimation, SingleEdge) {
    const MixedGraph g = graph_from_arcs(GraphKind::DAG, {"X", "Y"}, {"X -> Y"});
    const LinearSCM scm(g, {{{0, 1}, 0.7}}, {1.0, 1.0});
    const Dataset d = sample(scm, 100000, 11);
    EXPECT_NEAR(estimate_effect(d, {0, 1}, {}), 0.7, 0.01);
}

TEST(Estimation, CertifiedSetRecoversEdgeWeight) {
    const Fixture f = builtin_fixture("fig4");
    const LinearSCM scm = assign_weights(f.dag, 3);
    const Dataset d = sample(scm, 100000, 3);
    const NodePair p = f.pair();
    const NodeSet z = make_set({f.dag.index("V5"), f.dag.index("V6"), f.dag.index("V8")});
    EXPECT_NEAR(estimate_effect(d, p, z), true_total_effect(scm, p), 0.03);
}

TEST(Estimation, Guards) {
    Eigen::MatrixXd v(4, 3);
    v << 1, 2, 2, 2, 3, 4, 3, 1, 6, 4, 5, 8;
    const Dataset d({"X", "Y", "Z"}, v);
    EXPECT_THROW(estimate_effect(d, {0, 1}, {1}), EstimationError);
    EXPECT_THROW(estimate_effect(d, {0, 5}, {}), EstimationError);
    EXPECT_THROW(estimate_effect(d, {0, 1}, {2}), EstimationError);  // Z = 2X
    EXPECT_NO_THROW(estimate_effect(d, {0, 1}, {}));
}

TEST(Estimation, DataRunReportsTheta) {
    const Fixture f = builtin_fixture("fig3");
    const LinearSCM scm = assign_weights(f.dag, 5);
    const Dataset full = sample(scm, 20000, 5);
    auto [d, mag] = drop_latents(scm, f.latents, full, f.pair());
    const NodePair p(mag.index("X"), mag.index("Y"));
    FisherZTester t(d);
    SearchOptions opt;
    opt.cap = 3;
    auto [dec, tr] = run_lsas(t, &d, p, mag.all_nodes(), opt);
    ASSERT_EQ(kind_of(dec), DecisionKind::Effect);
    const auto& e = std::get<Effect>(dec);
    EXPECT_DOUBLE_EQ(e.theta, estimate_effect(d, p, e.z));
    EXPECT_EQ(tr.n_tests, t.query_count());
}
