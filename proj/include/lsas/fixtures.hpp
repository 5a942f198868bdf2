#pragma once

#include <algorithm>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lsas/graph.hpp"
#include "lsas/graph_algorithms.hpp"
#include "lsas/graph_io.hpp"

#ifndef LSAS_FIXTURE_DIR
#define LSAS_FIXTURE_DIR "fixtures"
#endif

namespace lsas {

/// Builds a graph from arc strings "A -> B" and "A <-> B".
inline MixedGraph graph_from_arcs(GraphKind kind, std::vector<std::string> nodes,
                                  std::initializer_list<std::string_view> arcs) {
    std::vector<Edge> edges;
    auto find = [&](const std::string& id) {
        auto it = std::find(nodes.begin(), nodes.end(), id);
        if (it == nodes.end()) throw GraphError("unknown node '" + id + "' in arc list");
        return static_cast<NodeId>(it - nodes.begin());
    };
    for (std::string_view arc : arcs) {
        auto tok = detail::split_ws(std::string(arc));
        if (tok.size() != 3) throw GraphError("bad arc '" + std::string(arc) + "'");
        const NodeId a = find(tok[0]), b = find(tok[2]);
        if (tok[1] == "->")
            edges.push_back(Edge::directed(a, b));
        else if (tok[1] == "<->")
            edges.push_back(Edge::bidirected(a, b));
        else
            throw GraphError("bad arc '" + std::string(arc) + "'");
    }
    return MixedGraph(kind, std::move(nodes), edges);
}

/// A DAG whose latent projection is `mag`: each A <-> B becomes
/// A <- L_A_B -> B. Latents are appended after the MAG's nodes.
inline std::pair<MixedGraph, NodeSet> canonical_dag(const MixedGraph& mag) {
    std::vector<std::string> names = mag.names();
    std::vector<Edge> edges;
    NodeSet latents;
    for (const Edge& e : mag.edges()) {
        if (mag.is_bidirected(e.a, e.b)) {
            const NodeId l = names.size();
            names.push_back("L_" + mag.name(e.a) + "_" + mag.name(e.b));
            latents.push_back(l);
            edges.push_back(Edge::directed(l, e.a));
            edges.push_back(Edge::directed(l, e.b));
        } else {
            edges.push_back(e);
        }
    }
    return {MixedGraph(GraphKind::DAG, std::move(names), edges), latents};
}

/// A named causal structure: the full DAG, its latent nodes and the
/// default (treatment, outcome).
struct Fixture {
    std::string name;
    MixedGraph dag;
    NodeSet latents;
    std::string treatment = "X";
    std::string outcome = "Y";
    /// Default conditioning cap for the R1/R2 search.
    std::size_t cap = 3;

    NodeSet observed() const { return set_difference(dag.all_nodes(), latents); }
    MixedGraph mag() const { return latent_project(dag, observed()); }
    NodePair pair() const { return NodePair(dag.index(treatment), dag.index(outcome)); }
};

namespace detail {

inline Fixture from_mag(std::string name, const MixedGraph& mag) {
    auto [dag, latents] = canonical_dag(mag);
    Fixture f;
    f.name = std::move(name);
    f.dag = std::move(dag);
    f.latents = std::move(latents);
    return f;
}

inline Fixture from_dag(std::string name, MixedGraph dag, std::initializer_list<std::string_view> latent_ids) {
    Fixture f;
    f.name = std::move(name);
    std::vector<NodeId> l;
    for (auto id : latent_ids) l.push_back(dag.index(id));
    f.latents = make_set(std::move(l));
    f.dag = std::move(dag);
    return f;
}

inline std::vector<std::string> node_names(std::size_t covariates, std::size_t latents) {
    std::vector<std::string> out{"X", "Y"};
    for (std::size_t i = 1; i <= covariates; ++i) out.push_back("V" + std::to_string(i));
    for (std::size_t i = 1; i <= latents; ++i) out.push_back("U" + std::to_string(i));
    return out;
}

inline MixedGraph fig3_dag(bool with_xy_edge) {
    auto names = node_names(7, 2);
    if (with_xy_edge)
        return graph_from_arcs(GraphKind::DAG, names,
                               {"X -> Y", "U1 -> X", "U1 -> V3", "U2 -> Y", "U2 -> V3", "V6 -> V7", "V6 -> X",
                                "V4 -> V5", "V4 -> Y", "V1 -> V2", "V1 -> X", "V1 -> Y", "V2 -> X", "V2 -> Y"});
    return graph_from_arcs(GraphKind::DAG, names,
                           {"U1 -> X", "U1 -> V3", "U2 -> Y", "U2 -> V3", "V6 -> V7", "V6 -> X", "V4 -> V5",
                            "V4 -> Y", "V1 -> V2", "V1 -> X", "V1 -> Y", "V2 -> X", "V2 -> Y"});
}

}  // namespace detail

/// Names accepted by builtin_fixture.
inline std::vector<std::string> builtin_fixture_names() {
    return {"fig1a", "fig1b", "fig1c", "fig3", "fig3-no-edge", "fig3-no-edge-V2-latent", "fig4",
            "fig8a", "fig8b", "fig10", "m-structure"};
}

inline Fixture builtin_fixture(const std::string& name) {
    using detail::node_names;
    if (name == "fig1a")
        return detail::from_mag(name, graph_from_arcs(GraphKind::MAG, node_names(5, 0),
                                                      {"X -> Y", "V5 -> Y", "V5 -> V4", "V4 -> V3", "V2 <-> V4",
                                                       "V2 -> V1", "V3 -> V1", "V1 -> X"}));
    if (name == "fig1b")
        return detail::from_mag(name, graph_from_arcs(GraphKind::MAG, node_names(4, 0),
                                                      {"X -> Y", "X <-> V1", "Y <-> V4", "V4 -> V1", "V1 <-> V2",
                                                       "V3 -> V2", "V3 -> V4", "V2 -> Y"}));
    if (name == "fig1c")
        return detail::from_mag(name, graph_from_arcs(GraphKind::MAG, node_names(3, 0),
                                                      {"X -> Y", "V2 -> Y", "V3 -> Y", "V3 <-> V2", "V3 <-> X",
                                                       "V1 -> V2"}));
    if (name == "fig3") return detail::from_dag(name, detail::fig3_dag(true), {"U1", "U2"});
    if (name == "fig3-no-edge") return detail::from_dag(name, detail::fig3_dag(false), {"U1", "U2"});
    if (name == "fig3-no-edge-V2-latent")
        return detail::from_dag(name, detail::fig3_dag(false), {"U1", "U2", "V2"});
    if (name == "fig4")
        return detail::from_dag(
            name,
            graph_from_arcs(GraphKind::DAG, node_names(9, 4),
                            {"X -> Y", "U1 -> X", "U1 -> V1", "U2 -> Y", "U2 -> V1", "U3 -> X", "U3 -> V5",
                             "U4 -> V6", "U4 -> V5", "V5 -> Y", "V2 -> Y", "V6 -> Y", "V2 -> V3", "V7 -> V6",
                             "V8 -> X", "V8 -> Y", "V9 -> V8", "V9 -> Y"}),
            {"U1", "U2", "U3", "U4"});
    if (name == "fig8a")
        return detail::from_mag(name, graph_from_arcs(GraphKind::MAG, {"X", "Y", "S"}, {"S -> X", "X -> Y"}));
    if (name == "fig8b")
        return detail::from_mag(name, graph_from_arcs(GraphKind::MAG, {"X", "Y", "S", "V1", "V2", "V3"},
                                                      {"S -> V3", "V3 <-> V2", "V3 -> Y", "V2 -> Y", "V1 -> Y",
                                                       "V1 <-> V2", "V1 <-> X", "X -> Y"}));
    if (name == "fig10")
        return detail::from_dag(name, graph_from_arcs(GraphKind::DAG, {"X", "Y", "V"}, {"V -> X", "V -> Y", "X -> Y"}),
                                {});
    if (name == "m-structure")
        return detail::from_dag(name,
                                graph_from_arcs(GraphKind::DAG, {"X", "Y", "M", "U1", "U2"},
                                                {"X -> Y", "U1 -> X", "U1 -> M", "U2 -> Y", "U2 -> M"}),
                                {"U1", "U2"});
    throw GraphError("unknown fixture '" + name + "'");
}

inline bool is_builtin_fixture(const std::string& name) {
    auto names = builtin_fixture_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

/// Benchmark-network topologies shipped under fixtures/networks.
inline std::vector<std::string> benchmark_network_names() { return {"insurance", "mildew", "win95pts", "andes"}; }

inline std::optional<std::size_t> benchmark_cap(const std::string& name) {
    if (name == "insurance" || name == "mildew") return 5;
    if (name == "win95pts" || name == "andes") return 7;
    return std::nullopt;
}

inline std::string benchmark_network_path(const std::string& name) {
    return std::string(LSAS_FIXTURE_DIR) + "/networks/" + name + ".edges";
}

inline MixedGraph load_benchmark_network(const std::string& name) {
    if (!benchmark_cap(name)) throw GraphError("unknown benchmark network '" + name + "'");
    return load_edge_list(benchmark_network_path(name));
}

}  // namespace lsas
