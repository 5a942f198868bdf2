#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "lsas/graph.hpp"
#include "lsas/subsets.hpp"

namespace lsas {

/// Default bound on 2^k brute-force enumerations.
inline constexpr std::size_t kDefaultEnumerationCap = 20;

namespace detail {

inline void check_query(const MixedGraph& g, NodeId x, NodeId y, const NodeSet& z) {
    g.check_node(x);
    g.check_node(y);
    for (NodeId v : z) g.check_node(v);
    if (x == y) throw GraphError("separation query needs two distinct nodes");
    if (contains(z, x) || contains(z, y))
        throw GraphError("conditioning set contains a query endpoint");
}

}  // namespace detail

/// Nodes joined to `x` by an m-connecting path given `z`.
///
/// Reachability over (node, arrived-with-arrowhead) states: a node entered
/// through an arrowhead and left through an arrowhead is a collider and is
/// passable iff it is an ancestor of `z`; any other passage is a non-collider
/// and is passable iff the node is outside `z`.
inline NodeSet m_connected(const MixedGraph& g, NodeId x, const NodeSet& z) {
    const std::size_t n = g.size();
    std::vector<char> in_z(n, 0), in_an_z(n, 0);
    for (NodeId v : z) in_z[v] = 1;
    for (NodeId v : ancestors(g, z)) in_an_z[v] = 1;

    // visited[2*v + arrow]
    std::vector<char> visited(2 * n, 0);
    std::vector<char> reached(n, 0);
    std::vector<std::pair<NodeId, bool>> stack;

    for (NodeId w : g.neighbors(x)) {
        bool arrow = g.into(x, w);
        if (!visited[2 * w + arrow]) {
            visited[2 * w + arrow] = 1;
            stack.emplace_back(w, arrow);
        }
    }
    while (!stack.empty()) {
        auto [v, arrived_arrow] = stack.back();
        stack.pop_back();
        reached[v] = 1;
        for (NodeId w : g.neighbors(v)) {
            if (w == x) continue;
            const bool collider = arrived_arrow && g.into(w, v);
            const bool pass = collider ? in_an_z[v] : !in_z[v];
            if (!pass) continue;
            const bool arrow = g.into(v, w);
            if (!visited[2 * w + arrow]) {
                visited[2 * w + arrow] = 1;
                stack.emplace_back(w, arrow);
            }
        }
    }
    NodeSet out;
    for (NodeId i = 0; i < n; ++i)
        if (reached[i] && i != x) out.push_back(i);
    return out;
}

/// True iff no m-connecting path joins x and y given z (d-separation on DAGs).
inline bool m_separated(const MixedGraph& g, NodeId x, NodeId y, const NodeSet& z) {
    detail::check_query(g, x, y, z);
    return !contains(m_connected(g, x, z), y);
}

/// MAG over `observed` that preserves every d-separation among observed nodes.
///
/// Observed a, b are adjacent iff they are d-connected given
/// An({a, b}) ∩ observed ∖ {a, b} (no inducing path otherwise). Adjacent
/// pairs are oriented a -> b when a is an ancestor of b, bidirected when
/// neither is an ancestor of the other.
inline MixedGraph latent_project(const MixedGraph& dag, const NodeSet& observed) {
    if (dag.kind() != GraphKind::DAG) throw GraphError("latent_project needs a DAG");
    for (NodeId v : observed) dag.check_node(v);

    std::vector<std::string> names;
    for (NodeId v : observed) names.push_back(dag.name(v));

    std::vector<NodeSet> anc(dag.size());
    for (NodeId v : observed) anc[v] = ancestors(dag, v);

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        for (std::size_t j = i + 1; j < observed.size(); ++j) {
            const NodeId a = observed[i], b = observed[j];
            NodeSet sep = set_intersection(set_union(anc[a], anc[b]), observed);
            sep = without(without(std::move(sep), a), b);
            if (m_separated(dag, a, b, sep)) continue;
            if (contains(anc[b], a))
                edges.push_back(Edge::directed(i, j));
            else if (contains(anc[a], b))
                edges.push_back(Edge::directed(j, i));
            else
                edges.push_back(Edge::bidirected(i, j));
        }
    }
    return MixedGraph(GraphKind::MAG, std::move(names), edges);
}

/// Markov blanket of y: its adjacent nodes plus every node joined to y by a
/// collider path.
inline NodeSet markov_blanket(const MixedGraph& g, NodeId y) {
    g.check_node(y);
    std::vector<char> member(g.size(), 0), expanded(g.size(), 0);
    std::vector<NodeId> stack;
    for (NodeId w : g.neighbors(y)) {
        member[w] = 1;
        if (g.into(y, w) && !expanded[w]) {
            expanded[w] = 1;
            stack.push_back(w);
        }
    }
    // every node on the frontier was entered through an arrowhead; leaving it
    // through another arrowhead keeps it a collider
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : g.neighbors(v)) {
            if (w == y || !g.into(w, v)) continue;
            member[w] = 1;
            if (g.into(v, w) && !expanded[w]) {
                expanded[w] = 1;
                stack.push_back(w);
            }
        }
    }
    NodeSet out;
    for (NodeId i = 0; i < g.size(); ++i)
        if (member[i] && i != y) out.push_back(i);
    return out;
}

/// Visibility of the directed edge x -> y. Every directed edge of a DAG is
/// visible. In a MAG the edge is visible iff some S not adjacent to y has an
/// edge into x, or a collider path into x whose interior nodes are all
/// parents of y.
inline bool is_visible(const MixedGraph& g, NodeId x, NodeId y) {
    g.check_node(x);
    g.check_node(y);
    if (!g.is_directed(x, y))
        throw GraphError("no directed edge " + g.name(x) + " -> " + g.name(y));
    if (g.kind() == GraphKind::DAG) return true;

    auto qualifies_as_source = [&](NodeId s) { return s != y && s != x && !g.adjacent(s, y); };

    std::vector<char> expanded(g.size(), 0);
    std::vector<NodeId> stack;
    for (NodeId s : g.neighbors(x)) {
        if (!g.into(s, x)) continue;
        if (qualifies_as_source(s)) return true;
        // s may sit inside a collider path: s <-> x with s -> y
        if (g.into(x, s) && g.is_directed(s, y) && !expanded[s]) {
            expanded[s] = 1;
            stack.push_back(s);
        }
    }
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : g.neighbors(v)) {
            if (w == x || !g.into(w, v)) continue;
            if (qualifies_as_source(w)) return true;
            if (g.into(v, w) && g.is_directed(w, y) && !expanded[w]) {
                expanded[w] = 1;
                stack.push_back(w);
            }
        }
    }
    return false;
}

/// Nodes lying on a causal path from x to y, excluding x.
inline NodeSet causal_path_nodes(const MixedGraph& g, const NodePair& pair) {
    NodeSet on = set_intersection(descendants(g, pair.treatment), ancestors(g, pair.outcome));
    return without(std::move(on), pair.treatment);
}

/// Descendants of the nodes on causal paths from X to Y. X itself is left
/// out; adjustment sets never contain it.
inline NodeSet forbidden_set(const MixedGraph& g, const NodePair& pair) {
    g.check_node(pair.treatment);
    g.check_node(pair.outcome);
    NodeSet on_path = causal_path_nodes(g, pair);
    if (on_path.empty()) return {};
    return without(descendants(g, on_path), pair.treatment);
}

/// Every causal path X ~> Y starts with a visible edge out of X.
inline bool is_amenable(const MixedGraph& g, const NodePair& pair) {
    g.check_node(pair.treatment);
    g.check_node(pair.outcome);
    const NodeSet an_y = ancestors(g, pair.outcome);
    for (NodeId c : g.children(pair.treatment))
        if (contains(an_y, c) && !is_visible(g, pair.treatment, c)) return false;
    return true;
}

/// Graph with the first edge of every proper causal path X ~> Y removed.
inline MixedGraph proper_backdoor_graph(const MixedGraph& g, const NodePair& pair) {
    const NodeSet an_y = ancestors(g, pair.outcome);
    std::vector<Edge> kept;
    for (const Edge& e : g.edges()) {
        const bool out_of_x =
            (e.a == pair.treatment && g.is_directed(e.a, e.b) && contains(an_y, e.b)) ||
            (e.b == pair.treatment && g.is_directed(e.b, e.a) && contains(an_y, e.a));
        if (!out_of_x) kept.push_back(e);
    }
    return MixedGraph(g.kind(), g.names(), kept);
}

/// Generalized adjustment criterion: amenability, no forbidden node in Z, and
/// every non-causal path from X to Y blocked by Z. The last condition is
/// checked as m-separation of X and Y in the proper back-door graph.
/// Only DAGs and MAGs are represented, so every path has definite status.
inline bool is_valid_adjustment(const MixedGraph& g, const NodePair& pair, const NodeSet& z) {
    detail::check_query(g, pair.treatment, pair.outcome, z);
    if (!is_amenable(g, pair)) return false;
    if (!set_intersection(z, forbidden_set(g, pair)).empty()) return false;
    return m_separated(proper_backdoor_graph(g, pair), pair.treatment, pair.outcome, z);
}

/// Brute-force list of every valid adjustment set drawn from `universe`,
/// ordered by size, then lexicographically.
inline std::vector<NodeSet> enumerate_adjustment_sets(const MixedGraph& g, const NodePair& pair,
                                                      const NodeSet& universe,
                                                      std::size_t cap = kDefaultEnumerationCap) {
    if (universe.size() > cap)
        throw GraphError("universe of " + std::to_string(universe.size()) +
                         " nodes exceeds enumeration cap " + std::to_string(cap));
    const NodeSet u = without(without(universe, pair.treatment), pair.outcome);
    if (u.size() != universe.size()) throw GraphError("universe contains treatment or outcome");
    std::vector<NodeSet> out;
    if (!is_amenable(g, pair)) return out;
    for_each_subset(u, u.size(), [&](const NodeSet& z) {
        if (is_valid_adjustment(g, pair, z)) out.push_back(z);
        return false;
    });
    return out;
}

/// Smallest set found (by size, then lexicographically) that m-separates a and
/// b, if any.
inline std::optional<NodeSet> find_separating_set(const MixedGraph& g, NodeId a, NodeId b,
                                                  std::size_t cap = kDefaultEnumerationCap) {
    const NodeSet rest = without(without(g.all_nodes(), a), b);
    if (rest.size() > cap)
        throw GraphError("separating-set search over " + std::to_string(rest.size()) +
                         " nodes exceeds enumeration cap " + std::to_string(cap));
    std::optional<NodeSet> found;
    for_each_subset(rest, rest.size(), [&](const NodeSet& z) {
        if (m_separated(g, a, b, z)) {
            found = z;
            return true;
        }
        return false;
    });
    return found;
}

/// Every nonadjacent pair is m-separated by some set (exhaustive search).
inline bool is_maximal(const MixedGraph& g, std::size_t cap = kDefaultEnumerationCap) {
    for (NodeId a = 0; a < g.size(); ++a)
        for (NodeId b = a + 1; b < g.size(); ++b)
            if (!g.adjacent(a, b) && !find_separating_set(g, a, b, cap)) return false;
    return true;
}

}  // namespace lsas
