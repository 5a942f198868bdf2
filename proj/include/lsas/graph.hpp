#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lsas {

using NodeId = std::size_t;

/// Sorted, duplicate-free list of node indices. All set-valued graph
/// operations return this form, so equality is plain vector equality.
using NodeSet = std::vector<NodeId>;

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Mark : std::uint8_t { Tail, Arrow };
enum class GraphKind : std::uint8_t { DAG, MAG };

inline const char* to_string(GraphKind k) { return k == GraphKind::DAG ? "DAG" : "MAG"; }

/// An edge record. `mark_a` is the mark at `a`'s end; A -> B is (Tail, Arrow),
/// A <-> B is (Arrow, Arrow).
struct Edge {
    NodeId a;
    Mark mark_a;
    NodeId b;
    Mark mark_b;

    static Edge directed(NodeId from, NodeId to) { return {from, Mark::Tail, to, Mark::Arrow}; }
    static Edge bidirected(NodeId a, NodeId b) { return {a, Mark::Arrow, b, Mark::Arrow}; }

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Ordered (treatment, outcome) pair.
struct NodePair {
    NodeId treatment;
    NodeId outcome;

    NodePair(NodeId x, NodeId y) : treatment(x), outcome(y) {
        if (x == y) throw GraphError("treatment and outcome must differ");
    }
};

// ---------------------------------------------------------------------------
// NodeSet helpers

inline NodeSet make_set(std::vector<NodeId> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

inline NodeSet make_set(std::initializer_list<NodeId> v) { return make_set(std::vector<NodeId>(v)); }

inline bool contains(const NodeSet& s, NodeId v) { return std::binary_search(s.begin(), s.end(), v); }

inline NodeSet set_union(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline NodeSet set_difference(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline NodeSet set_intersection(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline NodeSet with(NodeSet s, NodeId v) {
    auto it = std::lower_bound(s.begin(), s.end(), v);
    if (it == s.end() || *it != v) s.insert(it, v);
    return s;
}

inline NodeSet without(NodeSet s, NodeId v) {
    auto it = std::lower_bound(s.begin(), s.end(), v);
    if (it != s.end() && *it == v) s.erase(it);
    return s;
}

// ---------------------------------------------------------------------------

/// Immutable directed mixed graph with tail/arrow endpoint marks. Holds DAGs
/// and (maximal) ancestral graphs. Node order is insertion order and is the
/// canonical order for every enumeration in the library.
class MixedGraph {
public:
    MixedGraph() = default;

    MixedGraph(GraphKind kind, std::vector<std::string> nodes, std::span<const Edge> edges)
        : kind_(kind), names_(std::move(nodes)) {
        const std::size_t n = names_.size();
        for (std::size_t i = 0; i < n; ++i) {
            if (names_[i].empty()) throw GraphError("empty node identifier");
            if (!index_.emplace(names_[i], i).second)
                throw GraphError("duplicate node identifier '" + names_[i] + "'");
        }
        marks_.assign(n * n, kNone);
        adj_.resize(n);
        for (const Edge& e : edges) add_edge(e);
        for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
        validate();
    }

    MixedGraph(GraphKind kind, std::vector<std::string> nodes, std::initializer_list<Edge> edges)
        : MixedGraph(kind, std::move(nodes), std::span<const Edge>(edges.begin(), edges.size())) {}

    GraphKind kind() const { return kind_; }
    std::size_t size() const { return names_.size(); }

    const std::string& name(NodeId v) const { return names_.at(v); }
    const std::vector<std::string>& names() const { return names_; }

    std::vector<std::string> names(const NodeSet& s) const {
        std::vector<std::string> out;
        out.reserve(s.size());
        for (NodeId v : s) out.push_back(name(v));
        return out;
    }

    bool contains(std::string_view id) const { return index_.count(std::string(id)) != 0; }

    NodeId index(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) throw GraphError("unknown node '" + std::string(id) + "'");
        return it->second;
    }

    NodeSet node_set(std::initializer_list<std::string_view> ids) const {
        std::vector<NodeId> v;
        for (auto id : ids) v.push_back(index(id));
        return make_set(std::move(v));
    }

    NodeSet node_set(const std::vector<std::string>& ids) const {
        std::vector<NodeId> v;
        for (const auto& id : ids) v.push_back(index(id));
        return make_set(std::move(v));
    }

    NodeSet all_nodes() const {
        NodeSet s(size());
        for (NodeId i = 0; i < size(); ++i) s[i] = i;
        return s;
    }

    void check_node(NodeId v) const {
        if (v >= size()) throw GraphError("node index " + std::to_string(v) + " out of range");
    }

    bool adjacent(NodeId a, NodeId b) const { return mark_raw(a, b) != kNone; }

    /// Mark at `at`'s end of the edge between `other` and `at`, if adjacent.
    std::optional<Mark> mark_at(NodeId other, NodeId at) const {
        auto m = mark_raw(other, at);
        if (m == kNone) return std::nullopt;
        return static_cast<Mark>(m);
    }

    /// True iff a -> b.
    bool is_directed(NodeId a, NodeId b) const {
        return mark_raw(a, b) == kArrow && mark_raw(b, a) == kTail;
    }

    bool is_bidirected(NodeId a, NodeId b) const {
        return mark_raw(a, b) == kArrow && mark_raw(b, a) == kArrow;
    }

    /// True iff the edge a *-* b has an arrowhead at b.
    bool into(NodeId a, NodeId b) const { return mark_raw(a, b) == kArrow; }

    const std::vector<NodeId>& neighbors(NodeId v) const { return adj_.at(v); }

    NodeSet parents(NodeId v) const { return select(v, [&](NodeId w) { return is_directed(w, v); }); }
    NodeSet children(NodeId v) const { return select(v, [&](NodeId w) { return is_directed(v, w); }); }
    NodeSet spouses(NodeId v) const { return select(v, [&](NodeId w) { return is_bidirected(v, w); }); }

    /// Edges with a < b, sorted.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (NodeId a = 0; a < size(); ++a)
            for (NodeId b : adj_[a])
                if (a < b) out.push_back({a, static_cast<Mark>(mark_raw(b, a)), b, static_cast<Mark>(mark_raw(a, b))});
        return out;
    }

    std::size_t edge_count() const {
        std::size_t c = 0;
        for (const auto& nb : adj_) c += nb.size();
        return c / 2;
    }

    /// Copy with the edge between a and b removed (no-op if absent).
    MixedGraph without_edge(NodeId a, NodeId b) const {
        std::vector<Edge> es;
        for (const Edge& e : edges())
            if (!((e.a == a && e.b == b) || (e.a == b && e.b == a))) es.push_back(e);
        return MixedGraph(kind_, names_, es);
    }

    /// Same graph relabelled as a MAG (every DAG is a MAG).
    MixedGraph as_mag() const {
        auto es = edges();
        return MixedGraph(GraphKind::MAG, names_, es);
    }

    friend bool operator==(const MixedGraph& l, const MixedGraph& r) {
        return l.kind_ == r.kind_ && l.names_ == r.names_ && l.marks_ == r.marks_;
    }

private:
    static constexpr std::int8_t kNone = -1;
    static constexpr std::int8_t kTail = static_cast<std::int8_t>(Mark::Tail);
    static constexpr std::int8_t kArrow = static_cast<std::int8_t>(Mark::Arrow);

    // marks_[a * n + b] is the mark at b's end of edge a *-* b.
    std::int8_t mark_raw(NodeId a, NodeId b) const { return marks_[a * names_.size() + b]; }

    template <class Pred>
    NodeSet select(NodeId v, Pred pred) const {
        NodeSet out;
        for (NodeId w : adj_.at(v))
            if (pred(w)) out.push_back(w);
        return out;
    }

    void add_edge(const Edge& e) {
        const std::size_t n = names_.size();
        if (e.a >= n || e.b >= n) throw GraphError("edge endpoint out of range");
        if (e.a == e.b) throw GraphError("self-loop on '" + names_[e.a] + "'");
        if (mark_raw(e.a, e.b) != kNone)
            throw GraphError("more than one edge between '" + names_[e.a] + "' and '" + names_[e.b] + "'");
        if (e.mark_a == Mark::Tail && e.mark_b == Mark::Tail)
            throw GraphError("undirected edge between '" + names_[e.a] + "' and '" + names_[e.b] + "'");
        if (kind_ == GraphKind::DAG && e.mark_a == Mark::Arrow && e.mark_b == Mark::Arrow)
            throw GraphError("bidirected edge in a DAG");
        marks_[e.a * n + e.b] = static_cast<std::int8_t>(e.mark_b);
        marks_[e.b * n + e.a] = static_cast<std::int8_t>(e.mark_a);
        adj_[e.a].push_back(e.b);
        adj_[e.b].push_back(e.a);
    }

    void validate() const;

    GraphKind kind_ = GraphKind::MAG;
    std::vector<std::string> names_;
    std::unordered_map<std::string, NodeId> index_;
    std::vector<std::int8_t> marks_;
    std::vector<std::vector<NodeId>> adj_;
};

// ---------------------------------------------------------------------------
// Ancestral relations

/// Reflexive-transitive closure of the parent relation.
inline NodeSet ancestors(const MixedGraph& g, const NodeSet& targets) {
    std::vector<char> seen(g.size(), 0);
    std::vector<NodeId> stack;
    for (NodeId v : targets) {
        g.check_node(v);
        if (!seen[v]) {
            seen[v] = 1;
            stack.push_back(v);
        }
    }
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : g.neighbors(v))
            if (!seen[w] && g.is_directed(w, v)) {
                seen[w] = 1;
                stack.push_back(w);
            }
    }
    NodeSet out;
    for (NodeId i = 0; i < g.size(); ++i)
        if (seen[i]) out.push_back(i);
    return out;
}

inline NodeSet ancestors(const MixedGraph& g, NodeId v) { return ancestors(g, NodeSet{v}); }

inline NodeSet descendants(const MixedGraph& g, const NodeSet& sources) {
    std::vector<char> seen(g.size(), 0);
    std::vector<NodeId> stack;
    for (NodeId v : sources) {
        g.check_node(v);
        if (!seen[v]) {
            seen[v] = 1;
            stack.push_back(v);
        }
    }
    while (!stack.empty()) {
        NodeId v = stack.back();
        stack.pop_back();
        for (NodeId w : g.neighbors(v))
            if (!seen[w] && g.is_directed(v, w)) {
                seen[w] = 1;
                stack.push_back(w);
            }
    }
    NodeSet out;
    for (NodeId i = 0; i < g.size(); ++i)
        if (seen[i]) out.push_back(i);
    return out;
}

inline NodeSet descendants(const MixedGraph& g, NodeId v) { return descendants(g, NodeSet{v}); }

/// Topological order of the directed part, or nullopt if it has a cycle.
inline std::optional<std::vector<NodeId>> topological_order(const MixedGraph& g) {
    const std::size_t n = g.size();
    std::vector<std::size_t> indeg(n, 0);
    for (NodeId v = 0; v < n; ++v) indeg[v] = g.parents(v).size();
    std::vector<NodeId> order, ready;
    for (NodeId v = n; v-- > 0;)
        if (indeg[v] == 0) ready.push_back(v);
    while (!ready.empty()) {
        NodeId v = ready.back();
        ready.pop_back();
        order.push_back(v);
        auto ch = g.children(v);
        for (auto it = ch.rbegin(); it != ch.rend(); ++it)
            if (--indeg[*it] == 0) ready.push_back(*it);
    }
    if (order.size() != n) return std::nullopt;
    return order;
}

inline void MixedGraph::validate() const {
    if (!topological_order(*this)) throw GraphError("directed cycle");
    if (kind_ == GraphKind::MAG) {
        // almost directed cycle: a <-> b with a an ancestor of b
        for (NodeId a = 0; a < size(); ++a) {
            auto an = ancestors(*this, a);
            for (NodeId b : spouses(a))
                if (lsas::contains(an, b))
                    throw GraphError("almost directed cycle through '" + names_[a] + "' <-> '" + names_[b] + "'");
        }
    }
}

}  // namespace lsas
