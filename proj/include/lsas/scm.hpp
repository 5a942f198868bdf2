#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lsas/graph.hpp"
#include "lsas/graph_algorithms.hpp"

namespace lsas {

class ScmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// N x p sample matrix with named columns.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::vector<std::string> columns, Eigen::MatrixXd values)
        : columns_(std::move(columns)), values_(std::move(values)) {
        if (static_cast<std::size_t>(values_.cols()) != columns_.size())
            throw ScmError("dataset has " + std::to_string(values_.cols()) + " columns but " +
                           std::to_string(columns_.size()) + " names");
        for (std::size_t i = 0; i < columns_.size(); ++i)
            if (!index_.emplace(columns_[i], i).second) throw ScmError("duplicate column '" + columns_[i] + "'");
        if (!values_.allFinite()) throw ScmError("dataset contains missing or non-finite values");
    }

    std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
    std::size_t cols() const { return columns_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }
    const Eigen::MatrixXd& values() const { return values_; }

    std::size_t column_index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ScmError("unknown column '" + name + "'");
        return it->second;
    }

    bool has_column(const std::string& name) const { return index_.count(name) != 0; }

    /// Columns in the given order.
    Dataset select(const std::vector<std::string>& keep) const {
        Eigen::MatrixXd v(values_.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j)
            v.col(static_cast<Eigen::Index>(j)) = values_.col(static_cast<Eigen::Index>(column_index(keep[j])));
        return Dataset(keep, std::move(v));
    }

    /// Sample covariance (divisor N - 1).
    Eigen::MatrixXd covariance() const {
        const Eigen::RowVectorXd mean = values_.colwise().mean();
        const Eigen::MatrixXd centered = values_.rowwise() - mean;
        return (centered.adjoint() * centered) / static_cast<double>(values_.rows() - 1);
    }

private:
    std::vector<std::string> columns_;
    Eigen::MatrixXd values_;
    std::map<std::string, std::size_t> index_;
};

/// Linear-Gaussian SCM: V_j = sum_i W(i, j) V_i + noise_j * e_j, e_j ~ N(0, 1).
class LinearSCM {
public:
    LinearSCM() = default;

    LinearSCM(MixedGraph dag, const std::map<std::pair<NodeId, NodeId>, double>& weights,
              std::vector<double> noise_scales)
        : dag_(std::move(dag)), noise_(std::move(noise_scales)) {
        if (dag_.kind() != GraphKind::DAG) throw ScmError("SCM topology must be a DAG");
        const auto p = static_cast<Eigen::Index>(dag_.size());
        if (noise_.size() != dag_.size()) throw ScmError("one noise scale per node required");
        for (double s : noise_)
            if (!(s > 0.0) || !std::isfinite(s)) throw ScmError("noise scales must be positive");
        weights_ = Eigen::MatrixXd::Zero(p, p);
        std::size_t seen = 0;
        for (const auto& [edge, w] : weights) {
            if (!dag_.is_directed(edge.first, edge.second)) throw ScmError("weight on a missing edge");
            if (!std::isfinite(w)) throw ScmError("non-finite edge weight");
            weights_(static_cast<Eigen::Index>(edge.first), static_cast<Eigen::Index>(edge.second)) = w;
            ++seen;
        }
        if (seen != dag_.edge_count()) throw ScmError("every edge needs exactly one weight");
        order_ = *lsas::topological_order(dag_);
    }

    const MixedGraph& dag() const { return dag_; }
    const std::vector<double>& noise_scales() const { return noise_; }
    const std::vector<NodeId>& topological_order() const { return order_; }

    /// W(i, j) is the weight of i -> j (zero when absent).
    const Eigen::MatrixXd& weight_matrix() const { return weights_; }

    double weight(NodeId from, NodeId to) const {
        if (!dag_.is_directed(from, to)) throw ScmError("no edge " + dag_.name(from) + " -> " + dag_.name(to));
        return weights_(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to));
    }

    std::map<std::pair<NodeId, NodeId>, double> weights() const {
        std::map<std::pair<NodeId, NodeId>, double> out;
        for (NodeId a = 0; a < dag_.size(); ++a)
            for (NodeId b : dag_.children(a)) out[{a, b}] = weight(a, b);
        return out;
    }

    /// (I - W)^{-1}: entry (i, j) is the total effect of i on j.
    Eigen::MatrixXd total_effects() const {
        const auto p = weights_.rows();
        return (Eigen::MatrixXd::Identity(p, p) - weights_).inverse();
    }

    /// (I - W)^{-T} D (I - W)^{-1} with D = diag(noise^2).
    Eigen::MatrixXd implied_covariance() const {
        const Eigen::MatrixXd t = total_effects();
        Eigen::VectorXd d(static_cast<Eigen::Index>(noise_.size()));
        for (std::size_t i = 0; i < noise_.size(); ++i) d(static_cast<Eigen::Index>(i)) = noise_[i] * noise_[i];
        return t.transpose() * d.asDiagonal() * t;
    }

private:
    MixedGraph dag_;
    Eigen::MatrixXd weights_;
    std::vector<double> noise_;
    std::vector<NodeId> order_;
};

// ---------------------------------------------------------------------------

/// Erdős-Rényi DAG G(n, d): nodes V1..Vn are placed in a random order and each
/// of the n(n-1)/2 forward pairs gets an edge with probability d / (n - 1).
inline MixedGraph random_dag(std::size_t n, double avg_degree, std::uint64_t seed) {
    if (n < 2) throw ScmError("random_dag needs n >= 2");
    if (!(avg_degree > 0.0) || !(avg_degree < static_cast<double>(n)))
        throw ScmError("random_dag needs 0 < d < n");
    std::mt19937_64 rng(seed);
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const double p = std::min(1.0, avg_degree / static_cast<double>(n - 1));
    std::bernoulli_distribution coin(p);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (coin(rng)) edges.push_back(Edge::directed(perm[i], perm[j]));
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) names.push_back("V" + std::to_string(i + 1));
    return MixedGraph(GraphKind::DAG, std::move(names), edges);
}

struct WeightOptions {
    double low = 0.5;
    double high = 1.5;
    /// Extension: flip each weight's sign with probability 1/2.
    bool random_sign = false;
    double noise_scale = 1.0;
};

/// Edge weights drawn from U[low, high]; noise scales set to `noise_scale`.
inline LinearSCM assign_weights(const MixedGraph& dag, std::uint64_t seed, const WeightOptions& opt = {}) {
    if (dag.kind() != GraphKind::DAG) throw ScmError("assign_weights needs a DAG");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(opt.low, opt.high);
    std::bernoulli_distribution flip(0.5);
    std::map<std::pair<NodeId, NodeId>, double> w;
    for (const Edge& e : dag.edges()) {
        const NodeId from = e.mark_a == Mark::Tail ? e.a : e.b;
        const NodeId to = e.mark_a == Mark::Tail ? e.b : e.a;
        double v = unif(rng);
        if (opt.random_sign && flip(rng)) v = -v;
        w[{from, to}] = v;
    }
    return LinearSCM(dag, w, std::vector<double>(dag.size(), opt.noise_scale));
}

/// N draws from the SCM; columns follow the DAG's node order.
inline Dataset sample(const LinearSCM& scm, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw ScmError("sample size must be at least 1");
    const auto p = static_cast<Eigen::Index>(scm.dag().size());
    const auto n = static_cast<Eigen::Index>(n_samples);
    Eigen::MatrixXd x(n, p);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto& w = scm.weight_matrix();
    for (NodeId v : scm.topological_order()) {
        const auto j = static_cast<Eigen::Index>(v);
        const double s = scm.noise_scales()[v];
        for (Eigen::Index r = 0; r < n; ++r) x(r, j) = s * gauss(rng);
        for (NodeId u : scm.dag().parents(v)) {
            const auto i = static_cast<Eigen::Index>(u);
            x.col(j) += w(i, j) * x.col(i);
        }
    }
    return Dataset(scm.dag().names(), std::move(x));
}

/// Sum over directed paths X ~> Y of the product of edge weights.
inline double true_total_effect(const LinearSCM& scm, const NodePair& pair) {
    const auto& g = scm.dag();
    g.check_node(pair.treatment);
    g.check_node(pair.outcome);
    std::vector<double> effect(g.size(), 0.0);
    effect[pair.treatment] = 1.0;
    for (NodeId v : scm.topological_order()) {
        if (v == pair.treatment) continue;
        double acc = 0.0;
        for (NodeId u : g.parents(v)) acc += effect[u] * scm.weight(u, v);
        effect[v] = acc;
    }
    return effect[pair.outcome];
}

/// Removes latent columns from `data` and projects the DAG onto the rest.
inline std::pair<Dataset, MixedGraph> drop_latents(const LinearSCM& scm, const NodeSet& latents, const Dataset& data,
                                                   const std::optional<NodePair>& pair = std::nullopt) {
    const auto& dag = scm.dag();
    for (NodeId v : latents) dag.check_node(v);
    if (pair && (contains(latents, pair->treatment) || contains(latents, pair->outcome)))
        throw ScmError("treatment and outcome cannot be latent");
    const NodeSet observed = set_difference(dag.all_nodes(), latents);
    Dataset kept = data.select(dag.names(observed));
    return {std::move(kept), latent_project(dag, observed)};
}

struct LatentPick {
    NodeSet nodes;
    /// Fewer eligible nodes existed than were requested.
    bool short_of_request = false;
};

/// Random choice of `count` nodes with two or more children, never drawing
/// from `excluded` (typically the treatment and outcome).
inline LatentPick pick_latents(const MixedGraph& dag, std::size_t count, std::uint64_t seed,
                               const NodeSet& excluded = {}) {
    std::vector<NodeId> eligible;
    for (NodeId v = 0; v < dag.size(); ++v)
        if (!contains(excluded, v) && dag.children(v).size() >= 2) eligible.push_back(v);
    std::mt19937_64 rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    LatentPick out;
    out.short_of_request = eligible.size() < count;
    eligible.resize(std::min(count, eligible.size()));
    out.nodes = make_set(std::move(eligible));
    return out;
}

/// Fractional variant: round(fraction * n) nodes.
inline LatentPick pick_latent_fraction(const MixedGraph& dag, double fraction, std::uint64_t seed,
                                       const NodeSet& excluded = {}) {
    if (fraction < 0.0 || fraction > 1.0) throw ScmError("latent fraction must lie in [0, 1]");
    const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(dag.size())));
    return pick_latents(dag, count, seed, excluded);
}

/// (X, Y) = the last two nodes of the DAG's causal order, so no other node
/// descends from either.
inline NodePair last_two_in_causal_order(const MixedGraph& dag) {
    auto order = topological_order(dag);
    if (!order || order->size() < 2) throw ScmError("need an acyclic graph with at least two nodes");
    return NodePair((*order)[order->size() - 2], order->back());
}

}  // namespace lsas
