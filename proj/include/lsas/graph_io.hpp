#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "lsas/graph.hpp"

namespace lsas {

/// Shortest decimal form that parses back to the same double.
inline std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<double> parse_real(std::string_view s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
    return v;
}

/// Contents of a graph document. Weights and noise records only appear in
/// SCM files; plain graph files leave them empty.
struct GraphDocument {
    MixedGraph graph;
    std::map<std::pair<NodeId, NodeId>, double> weights;  // (parent, child)
    std::map<NodeId, double> noise;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline Mark parse_mark(const std::string& tok, std::size_t line_no) {
    if (tok == "-") return Mark::Tail;
    if (tok == ">") return Mark::Arrow;
    throw GraphError("line " + std::to_string(line_no) + ": bad edge mark '" + tok + "'");
}

inline const char* mark_token(Mark m) { return m == Mark::Tail ? "-" : ">"; }

}  // namespace detail

/// Parses the line-oriented graph format:
///
///     kind DAG|MAG
///     node <id>
///     edge <idA> <markA> <markB> <idB> [w=<real>]
///     noise <id> <real>
///
/// Marks are `-` (tail) or `>` (arrow). Blank lines and `#` comments are
/// ignored. Node declarations must precede edges.
inline GraphDocument parse_graph_document(std::istream& in) {
    std::optional<GraphKind> kind;
    std::vector<std::string> nodes;
    std::map<std::string, NodeId> index;
    struct RawEdge {
        std::string a, b;
        Mark ma, mb;
        std::optional<double> w;
        std::size_t line;
    };
    std::vector<RawEdge> raw;
    std::vector<std::pair<std::string, double>> noise;

    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) -> GraphError {
        return GraphError("line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok[0] == "kind") {
            if (tok.size() != 2) throw fail("expected 'kind DAG|MAG'");
            if (kind) throw fail("duplicate kind header");
            if (tok[1] == "DAG")
                kind = GraphKind::DAG;
            else if (tok[1] == "MAG")
                kind = GraphKind::MAG;
            else
                throw fail("unknown graph kind '" + tok[1] + "'");
        } else if (tok[0] == "node") {
            if (tok.size() != 2) throw fail("expected 'node <id>'");
            if (!raw.empty()) throw fail("node declared after edges");
            if (!index.emplace(tok[1], nodes.size()).second) throw fail("duplicate node '" + tok[1] + "'");
            nodes.push_back(tok[1]);
        } else if (tok[0] == "edge") {
            if (tok.size() != 5 && tok.size() != 6) throw fail("expected 'edge <a> <mark> <mark> <b> [w=<real>]'");
            RawEdge e{tok[1], tok[4], detail::parse_mark(tok[2], line_no), detail::parse_mark(tok[3], line_no),
                      std::nullopt, line_no};
            if (tok.size() == 6) {
                if (tok[5].rfind("w=", 0) != 0) throw fail("expected weight 'w=<real>'");
                e.w = parse_real(std::string_view(tok[5]).substr(2));
                if (!e.w) throw fail("bad weight '" + tok[5] + "'");
            }
            raw.push_back(std::move(e));
        } else if (tok[0] == "noise") {
            if (tok.size() != 3) throw fail("expected 'noise <id> <real>'");
            auto v = parse_real(tok[2]);
            if (!v) throw fail("bad noise scale '" + tok[2] + "'");
            noise.emplace_back(tok[1], *v);
        } else {
            throw fail("unknown record '" + tok[0] + "'");
        }
    }
    if (!kind) throw GraphError("missing 'kind DAG|MAG' header");

    GraphDocument doc;
    std::vector<Edge> edges;
    auto lookup = [&](const std::string& id, std::size_t ln) {
        auto it = index.find(id);
        if (it == index.end()) throw GraphError("line " + std::to_string(ln) + ": undeclared node '" + id + "'");
        return it->second;
    };
    for (const auto& e : raw) {
        NodeId a = lookup(e.a, e.line), b = lookup(e.b, e.line);
        edges.push_back({a, e.ma, b, e.mb});
        if (e.w) {
            if (e.ma == Mark::Tail && e.mb == Mark::Arrow)
                doc.weights[{a, b}] = *e.w;
            else if (e.ma == Mark::Arrow && e.mb == Mark::Tail)
                doc.weights[{b, a}] = *e.w;
            else
                throw GraphError("line " + std::to_string(e.line) + ": weight on a non-directed edge");
        }
    }
    for (const auto& [id, v] : noise) doc.noise[lookup(id, line_no)] = v;
    doc.graph = MixedGraph(*kind, std::move(nodes), edges);
    return doc;
}

inline MixedGraph parse_graph(std::istream& in) { return parse_graph_document(in).graph; }

inline MixedGraph parse_graph(const std::string& text) {
    std::istringstream is(text);
    return parse_graph(is);
}

inline MixedGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GraphError("cannot open graph file '" + path + "'");
    return parse_graph(in);
}

/// Writes the graph in the format read by parse_graph. Directed edges are
/// written tail first. `weight` (optional) supplies `w=` annotations.
template <class WeightFn>
void write_graph(std::ostream& out, const MixedGraph& g, WeightFn&& weight) {
    out << "kind " << to_string(g.kind()) << '\n';
    for (const auto& n : g.names()) out << "node " << n << '\n';
    for (const Edge& e : g.edges()) {
        Edge d = e;
        if (e.mark_a == Mark::Arrow && e.mark_b == Mark::Tail) d = {e.b, e.mark_b, e.a, e.mark_a};
        out << "edge " << g.name(d.a) << ' ' << detail::mark_token(d.mark_a) << ' '
            << detail::mark_token(d.mark_b) << ' ' << g.name(d.b);
        if (std::optional<double> w = weight(d); w) out << " w=" << format_real(*w);
        out << '\n';
    }
}

inline void write_graph(std::ostream& out, const MixedGraph& g) {
    write_graph(out, g, [](const Edge&) { return std::optional<double>{}; });
}

inline std::string to_text(const MixedGraph& g) {
    std::ostringstream os;
    write_graph(os, g);
    return os.str();
}

inline void save_graph(const std::string& path, const MixedGraph& g) {
    std::ofstream out(path);
    if (!out) throw GraphError("cannot write graph file '" + path + "'");
    write_graph(out, g);
}

/// Reads a benchmark-network topology: optional `node <id>` lines followed by
/// one `<parent> <child>` arc per line. Undeclared nodes are added in order of
/// first appearance.
inline MixedGraph parse_edge_list(std::istream& in) {
    std::vector<std::string> nodes;
    std::map<std::string, NodeId> index;
    std::vector<Edge> edges;
    auto intern = [&](const std::string& id) {
        auto [it, fresh] = index.emplace(id, nodes.size());
        if (fresh) nodes.push_back(id);
        return it->second;
    };
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto tok = detail::split_ws(line);
        if (tok.empty()) continue;
        if (tok.size() == 2 && tok[0] == "node") {
            intern(tok[1]);
            continue;
        }
        if (tok.size() != 2) throw GraphError("line " + std::to_string(line_no) + ": expected '<parent> <child>'");
        NodeId a = intern(tok[0]), b = intern(tok[1]);
        edges.push_back(Edge::directed(a, b));
    }
    return MixedGraph(GraphKind::DAG, std::move(nodes), edges);
}

inline MixedGraph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GraphError("cannot open edge list '" + path + "'");
    return parse_edge_list(in);
}

}  // namespace lsas
