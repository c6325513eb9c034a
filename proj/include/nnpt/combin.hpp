#pragma once

/**
 * @file combin.hpp
 * @brief Integer partitions, symmetry factors, index-block assignments and
 *        the adjacency-matrix encoding of derivative arborescences.
 *
 * Vertex indices of arborescences are 1-based and vertex 1 is always the
 * root. An entry A(i, j) > 0 means that the A(i, j)-th propagator leaving
 * vertex i leads to vertex j (equivalently: the edge carries A(i, j) arrow
 * heads).
 */

#include "nnpt/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace nnpt {

/// Step function with Theta(0) = 0. Every saturation gate goes through here.
constexpr int step_fn(long x) noexcept { return x > 0 ? 1 : 0; }

// ---------------------------------------------------------------------------
// Partitions
// ---------------------------------------------------------------------------

struct Partition {
    std::vector<int> parts; // non-increasing, all >= 1

    int total() const { return std::accumulate(parts.begin(), parts.end(), 0); }
    int length() const { return static_cast<int>(parts.size()); }

    friend auto operator<=>(const Partition&, const Partition&) = default;
};

/// All partitions of n into exactly c parts, in lexicographically decreasing order.
inline std::vector<Partition> partitions(int n, int c) {
    if (c < 1 || c > n) throw std::invalid_argument("partitions: need 1 <= c <= N");
    std::vector<Partition> out;
    std::vector<int> cur;
    // rem: amount left to distribute, slots: parts still to place, cap: max part size.
    auto rec = [&](auto&& self, int rem, int slots, int cap) -> void {
        if (slots == 0) {
            if (rem == 0) out.push_back(Partition{cur});
            return;
        }
        for (int v = std::min(cap, rem - (slots - 1)); v >= 1; --v) {
            if (v * slots < rem) break;
            cur.push_back(v);
            self(self, rem - v, slots - 1, v);
            cur.pop_back();
        }
    };
    rec(rec, n, c, n);
    return out;
}

/// All partitions of n, ordered by increasing length.
inline std::vector<Partition> partitions(int n) {
    if (n < 1) throw std::invalid_argument("partitions: need N >= 1");
    std::vector<Partition> out;
    for (int c = n; c >= 1; --c) {
        auto p = partitions(n, c);
        out.insert(out.end(), p.begin(), p.end());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Partition& a, const Partition& b) { return a.length() > b.length(); });
    return out;
}

inline std::int64_t factorial(int n) {
    std::int64_t r = 1;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

/**
 * Symmetry factor eps_pi = prod_i pi_i! [(m_i)!]^(1/m_i), where m_i counts
 * the parts equal to pi_i. Grouping equal parts gives the integer form
 * prod_v (v!)^(m_v) m_v!.
 */
inline std::int64_t symmetry_factor(const Partition& p) {
    std::int64_t eps = 1;
    std::size_t i = 0;
    while (i < p.parts.size()) {
        std::size_t j = i;
        while (j < p.parts.size() && p.parts[j] == p.parts[i]) ++j;
        const int m = static_cast<int>(j - i);
        for (int r = 0; r < m; ++r) eps *= factorial(p.parts[i]);
        eps *= factorial(m);
        i = j;
    }
    return eps;
}

/// One way of splitting {1..N} into blocks whose sizes follow a partition.
/// blocks[i] has size parts[i] and is sorted ascending.
using BlockAssignment = std::vector<std::vector<int>>;

/**
 * Every distinct split of {1..N} into blocks of sizes pi_1 >= ... >= pi_c,
 * treating blocks of equal size as unordered. There are N!/eps_pi of them.
 */
inline std::vector<BlockAssignment> block_assignments(int n, const Partition& p) {
    if (p.total() != n) throw std::invalid_argument("block_assignments: partition does not sum to N");
    std::vector<BlockAssignment> out;
    BlockAssignment cur(p.parts.size());
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);

    auto fill_block = [&](auto&& self_block, auto&& next_block, std::size_t b, int start) -> void {
        auto& block = cur[b];
        if (static_cast<int>(block.size()) == p.parts[b]) {
            next_block(next_block, b + 1);
            return;
        }
        for (int v = start; v <= n; ++v) {
            if (used[static_cast<std::size_t>(v)]) continue;
            used[static_cast<std::size_t>(v)] = true;
            block.push_back(v);
            self_block(self_block, next_block, b, v + 1);
            block.pop_back();
            used[static_cast<std::size_t>(v)] = false;
        }
    };

    auto next_block = [&](auto&& self, std::size_t b) -> void {
        if (b == cur.size()) {
            out.push_back(cur);
            return;
        }
        // Blocks of equal size are unordered: keep one representative by
        // requiring their smallest elements to increase along the run.
        const int start_at = (b > 0 && p.parts[b] == p.parts[b - 1]) ? cur[b - 1].front() + 1 : 1;
        fill_block(fill_block, self, b, start_at);
    };

    next_block(next_block, 0);
    return out;
}

// ---------------------------------------------------------------------------
// Adjacency matrices of arborescences
// ---------------------------------------------------------------------------

class AdjacencyMatrix {
public:
    AdjacencyMatrix() = default;
    explicit AdjacencyMatrix(int n) : n_(n), a_(static_cast<std::size_t>(n * n), 0) {
        if (n < 1) throw std::invalid_argument("AdjacencyMatrix: need n >= 1");
    }
    AdjacencyMatrix(int n, std::vector<int> row_major) : n_(n), a_(std::move(row_major)) {
        if (n < 1 || a_.size() != static_cast<std::size_t>(n * n))
            throw ShapeError("AdjacencyMatrix: entry count does not match n*n");
    }

    int size() const noexcept { return n_; }

    /// 1-based access.
    int operator()(int i, int j) const { return a_[static_cast<std::size_t>((i - 1) * n_ + (j - 1))]; }
    int& operator()(int i, int j) { return a_[static_cast<std::size_t>((i - 1) * n_ + (j - 1))]; }

    const std::vector<int>& entries() const noexcept { return a_; }

    /// Number of propagators leaving vertex c: max_r A(c, r).
    int out_propagators(int c) const {
        int m = 0;
        for (int r = 1; r <= n_; ++r) m = std::max(m, (*this)(c, r));
        return m;
    }

    /// Extends by one vertex attached to `parent` through its `b`-th propagator.
    AdjacencyMatrix extended(int parent, int b) const {
        AdjacencyMatrix out(n_ + 1);
        for (int i = 1; i <= n_; ++i)
            for (int j = 1; j <= n_; ++j) out(i, j) = (*this)(i, j);
        out(parent, n_ + 1) = b;
        return out;
    }

    friend auto operator<=>(const AdjacencyMatrix&, const AdjacencyMatrix&) = default;

private:
    int n_ = 0;
    std::vector<int> a_;
};

/**
 * Membership test for the allowed set: strictly upper triangular, exactly
 * one incoming edge for every vertex but the root, and arrow-head
 * consistency (A(i,j) > 0 requires A(i,j') = A(i,j) - 1 for some j' < j).
 */
inline bool is_allowed(const AdjacencyMatrix& a) {
    const int n = a.size();
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= i; ++j)
            if (a(i, j) != 0) return false;
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j)
            if (a(i, j) < 0) return false;
    if (n > 1) {
        for (int j = 2; j <= n; ++j) {
            int nonzero = 0;
            for (int i = 1; i <= n - 1; ++i) nonzero += a(i, j) != 0;
            if (nonzero != 1) return false;
        }
    }
    for (int i = 1; i <= n - 1; ++i)
        for (int j = 2; j <= n; ++j) {
            if (a(i, j) <= 0) continue;
            bool found = false;
            for (int jp = 1; jp < j && !found; ++jp) found = a(i, jp) == a(i, j) - 1;
            if (!found) return false;
        }
    return true;
}

/// Saturation threshold: the largest entry.
inline int alpha(const AdjacencyMatrix& a) {
    const auto& e = a.entries();
    return *std::max_element(e.begin(), e.end());
}

/// Parent of vertex c (sum_i i * Theta(A(i, c))); 0 for the root.
inline int beta(const AdjacencyMatrix& a, int c) {
    if (c < 1 || c > a.size()) throw std::out_of_range("beta: vertex out of range");
    int s = 0;
    for (int i = 1; i <= a.size(); ++i) s += i * step_fn(a(i, c));
    return s;
}

/// Number of children attached through the b-th propagator of vertex c.
/// That propagator has order 1 + multiplicity(a, b, c).
inline int multiplicity(const AdjacencyMatrix& a, int b, int c) {
    if (b < 1) throw std::invalid_argument("multiplicity: b must be >= 1");
    int s = 0;
    for (int j = 1; j <= a.size(); ++j) s += a(c, j) == b;
    return s;
}

/**
 * The allowed set for n vertices, built by appending one vertex at a time:
 * a new vertex hangs off vertex c through an existing propagator of c or a
 * fresh one (values 1..max_r A(c,r)+1). Each extension set is disjoint from
 * every other, so no de-duplication is needed.
 */
inline std::vector<AdjacencyMatrix> enumerate_adjacency(int n) {
    if (n < 1) throw std::invalid_argument("enumerate_adjacency: need N >= 1");
    std::vector<AdjacencyMatrix> level{AdjacencyMatrix(1)};
    for (int size = 1; size < n; ++size) {
        std::vector<AdjacencyMatrix> next;
        for (const auto& a : level)
            for (int c = 1; c <= size; ++c)
                for (int b = 1; b <= a.out_propagators(c) + 1; ++b) next.push_back(a.extended(c, b));
        level = std::move(next);
    }
    return level;
}

/// DOT digraph of an arborescence; edge labels carry the arrow-head count.
inline std::string to_dot(const AdjacencyMatrix& a) {
    std::ostringstream os;
    os << "digraph arborescence {\n";
    for (int i = 1; i <= a.size(); ++i) os << "  v" << i << " [label=\"k" << i << "\"];\n";
    for (int i = 1; i <= a.size(); ++i)
        for (int j = 1; j <= a.size(); ++j)
            if (a(i, j) > 0) os << "  v" << i << " -> v" << j << " [label=\"" << a(i, j) << "\"];\n";
    os << "}\n";
    return os.str();
}

inline nlohmann::json to_json(const AdjacencyMatrix& a) {
    auto rows = nlohmann::json::array();
    for (int i = 1; i <= a.size(); ++i) {
        std::vector<int> r;
        for (int j = 1; j <= a.size(); ++j) r.push_back(a(i, j));
        rows.push_back(r);
    }
    return rows;
}

inline nlohmann::json to_json(const std::vector<AdjacencyMatrix>& set) {
    auto arr = nlohmann::json::array();
    for (const auto& a : set) arr.push_back(to_json(a));
    return arr;
}

inline AdjacencyMatrix adjacency_from_json(const nlohmann::json& rows) {
    const int n = static_cast<int>(rows.size());
    AdjacencyMatrix a(n);
    for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j) a(i, j) = rows.at(i - 1).at(j - 1).get<int>();
    return a;
}

} // namespace nnpt
