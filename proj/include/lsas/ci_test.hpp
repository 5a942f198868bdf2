#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "lsas/graph.hpp"
#include "lsas/graph_algorithms.hpp"
#include "lsas/scm.hpp"

namespace lsas {

class CiError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The conditioning submatrix is not positive definite.
class SingularCovariance : public CiError {
public:
    using CiError::CiError;
};

/// A capped tester declined a query whose conditioning set is too large.
class CapRefusal : public CiError {
public:
    CapRefusal(std::size_t size, std::size_t cap)
        : CiError("conditioning set of size " + std::to_string(size) + " exceeds cap " + std::to_string(cap)),
          size_(size), cap_(cap) {}
    std::size_t size() const { return size_; }
    std::size_t cap() const { return cap_; }

private:
    std::size_t size_, cap_;
};

struct CIQuery {
    NodeId i;
    NodeId j;
    NodeSet z;
};

struct CIResult {
    bool independent = false;
    double statistic = 0.0;
    double p_value = 0.0;
};

inline constexpr double kDefaultAlpha = 0.01;

/// Independence-query contract. Every executed query bumps an atomic counter
/// by one; refused queries are not counted.
class CITester {
public:
    explicit CITester(double alpha = kDefaultAlpha) : alpha_(alpha) {
        if (!(alpha > 0.0 && alpha < 1.0)) throw CiError("significance level must lie in (0, 1)");
    }
    CITester(const CITester&) = delete;
    CITester& operator=(const CITester&) = delete;
    virtual ~CITester() = default;

    virtual CIResult test(NodeId i, NodeId j, const NodeSet& z) {
        check(i, j, z);
        if (i > j) std::swap(i, j);
        count_.fetch_add(1, std::memory_order_relaxed);
        return evaluate(i, j, z);
    }

    CIResult test(const CIQuery& q) { return test(q.i, q.j, q.z); }
    bool independent(NodeId i, NodeId j, const NodeSet& z) { return test(i, j, z).independent; }

    virtual std::size_t query_count() const { return count_.load(std::memory_order_relaxed); }
    double alpha() const { return alpha_; }

    virtual std::size_t num_variables() const = 0;
    virtual const std::vector<std::string>& variable_names() const = 0;

    /// Largest conditioning set this tester accepts (nullopt: unbounded).
    virtual std::optional<std::size_t> max_conditioning() const { return std::nullopt; }

    /// The tester with any conditioning cap peeled off. Markov-blanket
    /// discovery runs against this.
    virtual CITester& uncapped() { return *this; }

protected:
    virtual CIResult evaluate(NodeId i, NodeId j, const NodeSet& z) = 0;

    void check(NodeId i, NodeId j, const NodeSet& z) const {
        const std::size_t n = num_variables();
        if (i >= n || j >= n) throw CiError("query variable out of range");
        for (NodeId v : z)
            if (v >= n) throw CiError("conditioning variable out of range");
        if (i == j) throw CiError("query needs two distinct variables");
        if (contains(z, i) || contains(z, j)) throw CiError("conditioning set contains a query variable");
    }

private:
    double alpha_;
    std::atomic<std::size_t> count_{0};
};

// ---------------------------------------------------------------------------
// Gaussian partial correlation and the Fisher-z test

/// Partial correlation of i and j given z from the inverse of the
/// ({i, j} ∪ z) covariance block.
inline double partial_correlation(const Eigen::MatrixXd& cov, NodeId i, NodeId j, const NodeSet& z) {
    const auto p = static_cast<std::size_t>(cov.rows());
    if (cov.rows() != cov.cols()) throw CiError("covariance must be square");
    if (i >= p || j >= p) throw CiError("index out of range");
    std::vector<Eigen::Index> idx{static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)};
    for (NodeId v : z) {
        if (v >= p) throw CiError("index out of range");
        idx.push_back(static_cast<Eigen::Index>(v));
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd sub(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = cov(idx[a], idx[b]);

    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    if (llt.info() != Eigen::Success) throw SingularCovariance("conditioning covariance is not positive definite");
    const Eigen::MatrixXd prec = llt.solve(Eigen::MatrixXd::Identity(k, k));
    const double denom = std::sqrt(prec(0, 0) * prec(1, 1));
    if (!(denom > 0.0) || !std::isfinite(denom))
        throw SingularCovariance("degenerate precision matrix");
    return std::clamp(-prec(0, 1) / denom, -1.0, 1.0);
}

/// z = atanh(r) * sqrt(n - |Z| - 3), two-sided normal p-value. Ties at
/// p == alpha count as dependent.
inline CIResult fisher_z(double r, std::size_t n, std::size_t cond_size, double alpha) {
    if (n <= cond_size + 3) throw CiError("Fisher-z needs more than |Z| + 3 samples");
    CIResult out;
    if (std::abs(r) >= 1.0) {
        out.statistic = std::copysign(HUGE_VAL, r);
        out.p_value = 0.0;
    } else {
        out.statistic = 0.5 * std::log((1.0 + r) / (1.0 - r)) * std::sqrt(static_cast<double>(n - cond_size - 3));
        out.p_value = std::erfc(std::abs(out.statistic) / std::sqrt(2.0));
    }
    out.independent = out.p_value > alpha;
    return out;
}

/// One-shot Fisher-z test on a dataset (recomputes the covariance).
inline CIResult fisher_z_test(const Dataset& data, const CIQuery& q, double alpha = kDefaultAlpha) {
    if (data.rows() <= q.z.size() + 3) throw CiError("Fisher-z needs more than |Z| + 3 samples");
    const double r = partial_correlation(data.covariance(), q.i, q.j, q.z);
    return fisher_z(r, data.rows(), q.z.size(), alpha);
}

/// Fisher-z tester over a dataset. The covariance is computed once.
///
/// When a conditioning block is not positive definite and `ridge` is
/// positive, the block is retried with `ridge` added to its diagonal; such
/// retries are tallied in ridge_fallbacks().
class FisherZTester final : public CITester {
public:
    explicit FisherZTester(const Dataset& data, double alpha = kDefaultAlpha, double ridge = 1e-8)
        : CITester(alpha), names_(data.columns()), cov_(data.covariance()), n_(data.rows()), ridge_(ridge) {}

    std::size_t num_variables() const override { return names_.size(); }
    const std::vector<std::string>& variable_names() const override { return names_; }
    std::size_t sample_size() const { return n_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }
    std::size_t ridge_fallbacks() const { return ridge_fallbacks_.load(); }

protected:
    CIResult evaluate(NodeId i, NodeId j, const NodeSet& z) override {
        if (n_ <= z.size() + 3) throw CiError("Fisher-z needs more than |Z| + 3 samples");
        double r;
        try {
            r = partial_correlation(cov_, i, j, z);
        } catch (const SingularCovariance&) {
            if (!(ridge_ > 0.0)) throw;
            ridge_fallbacks_.fetch_add(1);
            Eigen::MatrixXd reg = cov_;
            reg.diagonal().array() += ridge_;
            r = partial_correlation(reg, i, j, z);
        }
        return fisher_z(r, n_, z.size(), alpha());
    }

private:
    std::vector<std::string> names_;
    Eigen::MatrixXd cov_;
    std::size_t n_;
    double ridge_;
    std::atomic<std::size_t> ridge_fallbacks_{0};
};

/// Exact answers from m-separation in a graph (faithfulness oracle).
class OracleTester final : public CITester {
public:
    explicit OracleTester(MixedGraph graph, double alpha = kDefaultAlpha)
        : CITester(alpha), graph_(std::move(graph)) {}

    std::size_t num_variables() const override { return graph_.size(); }
    const std::vector<std::string>& variable_names() const override { return graph_.names(); }
    const MixedGraph& graph() const { return graph_; }

protected:
    CIResult evaluate(NodeId i, NodeId j, const NodeSet& z) override {
        const bool sep = m_separated(graph_, i, j, z);
        return {sep, 0.0, sep ? 1.0 : 0.0};
    }

private:
    MixedGraph graph_;
};

/// Refuses queries conditioning on more than `cap` variables. Executed
/// queries are counted by the wrapped tester.
class CappedTester final : public CITester {
public:
    CappedTester(CITester& base, std::size_t cap) : CITester(base.alpha()), base_(base), cap_(cap) {}

    CIResult test(NodeId i, NodeId j, const NodeSet& z) override {
        check(i, j, z);
        if (z.size() > cap_) throw CapRefusal(z.size(), cap_);
        return base_.test(i, j, z);
    }
    using CITester::test;

    std::size_t query_count() const override { return base_.query_count(); }
    std::size_t num_variables() const override { return base_.num_variables(); }
    const std::vector<std::string>& variable_names() const override { return base_.variable_names(); }
    std::optional<std::size_t> max_conditioning() const override { return cap_; }
    CITester& uncapped() override { return base_.uncapped(); }

protected:
    CIResult evaluate(NodeId i, NodeId j, const NodeSet& z) override { return base_.test(i, j, z); }

private:
    CITester& base_;
    std::size_t cap_;
};

/// Wraps a tester with a caller-side capped view.
inline CappedTester max_cond_cap(CITester& tester, std::size_t k) { return CappedTester(tester, k); }

/// Opt-in query cache. Only cache misses reach (and are counted by) the
/// wrapped tester, so counts through this wrapper are not comparable to
/// uncached runs.
class MemoTester final : public CITester {
public:
    explicit MemoTester(CITester& base) : CITester(base.alpha()), base_(base) {}

    CIResult test(NodeId i, NodeId j, const NodeSet& z) override {
        check(i, j, z);
        if (i > j) std::swap(i, j);
        auto key = std::make_tuple(i, j, z);
        {
            std::lock_guard lock(mu_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        CIResult r = base_.test(i, j, z);
        std::lock_guard lock(mu_);
        cache_.emplace(std::move(key), r);
        return r;
    }
    using CITester::test;

    std::size_t query_count() const override { return base_.query_count(); }
    std::size_t num_variables() const override { return base_.num_variables(); }
    const std::vector<std::string>& variable_names() const override { return base_.variable_names(); }
    std::optional<std::size_t> max_conditioning() const override { return base_.max_conditioning(); }
    CITester& uncapped() override { return base_.uncapped(); }

protected:
    CIResult evaluate(NodeId i, NodeId j, const NodeSet& z) override { return base_.test(i, j, z); }

private:
    CITester& base_;
    std::mutex mu_;
    std::map<std::tuple<NodeId, NodeId, NodeSet>, CIResult> cache_;
};

}  // namespace lsas
