#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lsas/graph_io.hpp"
#include "lsas/scm.hpp"

namespace lsas {

// ---------------------------------------------------------------------------
// Dataset CSV: header row of column names, then one row per sample.

inline void write_csv(std::ostream& out, const Dataset& d) {
    for (std::size_t j = 0; j < d.cols(); ++j) out << (j ? "," : "") << d.columns()[j];
    out << '\n';
    const auto& v = d.values();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        for (Eigen::Index c = 0; c < v.cols(); ++c) out << (c ? "," : "") << format_real(v(r, c));
        out << '\n';
    }
}

inline void save_csv(const std::string& path, const Dataset& d) {
    std::ofstream out(path);
    if (!out) throw ScmError("cannot write '" + path + "'");
    write_csv(out, d);
}

inline Dataset read_csv(std::istream& in) {
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream is(line);
        while (std::getline(is, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            std::size_t s = 0;
            while (s < cell.size() && cell[s] == ' ') ++s;
            cells.push_back(cell.substr(s));
        }
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw ScmError("empty CSV");
    std::vector<std::string> header = split(line);
    for (auto& h : header)
        if (h.size() >= 2 && h.front() == '"' && h.back() == '"') h = h.substr(1, h.size() - 2);
    std::vector<double> cells;
    std::size_t rows = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto row = split(line);
        if (row.size() != header.size())
            throw ScmError("CSV line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                           " fields, got " + std::to_string(row.size()));
        for (const auto& c : row) {
            auto v = parse_real(c);
            if (!v) throw ScmError("CSV line " + std::to_string(line_no) + ": not a number '" + c + "'");
            cells.push_back(*v);
        }
        ++rows;
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(header.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < header.size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cells[r * header.size() + c];
    return Dataset(std::move(header), std::move(m));
}

inline Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScmError("cannot open '" + path + "'");
    return read_csv(in);
}

// ---------------------------------------------------------------------------
// SCM file: the graph format plus `w=` edge annotations and `noise` lines.

inline void write_scm(std::ostream& out, const LinearSCM& scm) {
    const auto& g = scm.dag();
    write_graph(out, g, [&](const Edge& e) { return std::optional<double>(scm.weight(e.a, e.b)); });
    for (NodeId v = 0; v < g.size(); ++v) out << "noise " << g.name(v) << ' ' << format_real(scm.noise_scales()[v]) << '\n';
}

inline std::string to_text(const LinearSCM& scm) {
    std::ostringstream os;
    write_scm(os, scm);
    return os.str();
}

inline void save_scm(const std::string& path, const LinearSCM& scm) {
    std::ofstream out(path);
    if (!out) throw ScmError("cannot write '" + path + "'");
    write_scm(out, scm);
}

/// Nodes without a `noise` record default to scale 1.
inline LinearSCM read_scm(std::istream& in) {
    GraphDocument doc = parse_graph_document(in);
    if (doc.graph.kind() != GraphKind::DAG) throw ScmError("SCM file must declare 'kind DAG'");
    std::vector<double> noise(doc.graph.size(), 1.0);
    for (const auto& [v, s] : doc.noise) noise[v] = s;
    return LinearSCM(std::move(doc.graph), doc.weights, std::move(noise));
}

inline LinearSCM load_scm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScmError("cannot open '" + path + "'");
    return read_scm(in);
}

}  // namespace lsas
