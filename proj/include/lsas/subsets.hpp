#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lsas/graph.hpp"

namespace lsas {

/// Visits subsets of `universe` by increasing cardinality, lexicographic (by
/// position in `universe`) within a cardinality, up to `max_size` elements.
/// The visitor receives a sorted NodeSet and returns true to stop early.
/// Returns true if the visitor stopped the enumeration.
template <class Visitor>
bool for_each_subset(const NodeSet& universe, std::size_t max_size, Visitor&& visit) {
    const std::size_t n = universe.size();
    const std::size_t top = std::min(max_size, n);
    std::vector<std::size_t> idx;
    NodeSet subset;
    for (std::size_t k = 0; k <= top; ++k) {
        idx.resize(k);
        for (std::size_t i = 0; i < k; ++i) idx[i] = i;
        while (true) {
            subset.clear();
            for (std::size_t i : idx) subset.push_back(universe[i]);
            if (visit(static_cast<const NodeSet&>(subset))) return true;
            // advance to the next k-combination
            std::size_t i = k;
            while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return false;
}

/// Number of subsets of an n-set with at most k elements.
inline std::size_t count_subsets(std::size_t n, std::size_t k) {
    std::size_t total = 0, c = 1;
    for (std::size_t i = 0; i <= std::min(n, k); ++i) {
        total += c;
        c = c * (n - i) / (i + 1);
    }
    return total;
}

}  // namespace lsas
