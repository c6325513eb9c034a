#include "nnpt/combin.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <set>

using namespace nnpt;

namespace {

std::vector<std::vector<int>> parts_of(const std::vector<Partition>& ps) {
    std::vector<std::vector<int>> out;
    for (const auto& p : ps) out.push_back(p.parts);
    std::sort(out.begin(), out.end());
    return out;
}

/// Every strictly-upper-triangular n x n matrix with entries in [0, n],
/// filtered directly by the membership test.
std::vector<AdjacencyMatrix> brute_force(int n) {
    std::vector<std::pair<int, int>> slots;
    for (int i = 1; i <= n; ++i)
        for (int j = i + 1; j <= n; ++j) slots.emplace_back(i, j);
    std::vector<AdjacencyMatrix> out;
    AdjacencyMatrix a(n);
    std::function<void(std::size_t)> rec = [&](std::size_t s) {
        if (s == slots.size()) {
            if (is_allowed(a)) out.push_back(a);
            return;
        }
        for (int v = 0; v <= n; ++v) {
            a(slots[s].first, slots[s].second) = v;
            rec(s + 1);
        }
        a(slots[s].first, slots[s].second) = 0;
    };
    rec(0);
    return out;
}

AdjacencyMatrix mat(int n, std::vector<int> e) { return AdjacencyMatrix(n, std::move(e)); }

} // namespace

TEST(StepFn, ZeroAtZero) {
    EXPECT_EQ(step_fn(1), 1);
    EXPECT_EQ(step_fn(0), 0);
    EXPECT_EQ(step_fn(-3), 0);
}

TEST(Partitions, Examples) {
    EXPECT_EQ(parts_of(partitions(3)), (std::vector<std::vector<int>>{{1, 1, 1}, {2, 1}, {3}}));
    EXPECT_EQ(parts_of(partitions(4, 2)), (std::vector<std::vector<int>>{{2, 2}, {3, 1}}));
    EXPECT_EQ(parts_of(partitions(1)), (std::vector<std::vector<int>>{{1}}));
    EXPECT_THROW(partitions(2, 3), std::invalid_argument);
}

TEST(Partitions, CountsMatchPartitionFunction) {
    const int p[] = {0, 1, 2, 3, 5, 7, 11, 15, 22};
    for (int n = 1; n <= 8; ++n) {
        std::size_t total = 0;
        for (int c = 1; c <= n; ++c) {
            for (const auto& q : partitions(n, c)) {
                EXPECT_EQ(q.total(), n);
                EXPECT_EQ(q.length(), c);
                EXPECT_TRUE(std::is_sorted(q.parts.rbegin(), q.parts.rend()));
            }
            total += partitions(n, c).size();
        }
        EXPECT_EQ(total, static_cast<std::size_t>(p[n]));
        EXPECT_EQ(partitions(n).size(), total);
    }
}

TEST(SymmetryFactor, TableValues) {
    EXPECT_EQ(symmetry_factor({{1}}), 1);
    EXPECT_EQ(symmetry_factor({{1, 1}}), 2);
    EXPECT_EQ(symmetry_factor({{2}}), 2);
    EXPECT_EQ(symmetry_factor({{1, 1, 1}}), 6);
    EXPECT_EQ(symmetry_factor({{2, 1}}), 2);
    EXPECT_EQ(symmetry_factor({{3}}), 6);
    EXPECT_EQ(symmetry_factor({{1, 1, 1, 1}}), 24);
    EXPECT_EQ(symmetry_factor({{2, 1, 1}}), 4);
    EXPECT_EQ(symmetry_factor({{2, 2}}), 8);
    EXPECT_EQ(symmetry_factor({{3, 1}}), 6);
    EXPECT_EQ(symmetry_factor({{4}}), 24);
}

TEST(BlockAssignments, Examples) {
    const auto a = block_assignments(3, {{2, 1}});
    EXPECT_EQ(a, (std::vector<BlockAssignment>{{{1, 2}, {3}}, {{1, 3}, {2}}, {{2, 3}, {1}}}));
    EXPECT_EQ(block_assignments(4, {{2, 2}}).size(), 3u);
    EXPECT_EQ(block_assignments(2, {{2}}).size(), 1u);
    EXPECT_THROW(block_assignments(3, {{2, 2}}), std::invalid_argument);
}

TEST(BlockAssignments, CountIsNFactorialOverEpsilonAndAllDistinct) {
    for (int n = 1; n <= 6; ++n) {
        for (const auto& p : partitions(n)) {
            const auto as = block_assignments(n, p);
            EXPECT_EQ(static_cast<std::int64_t>(as.size()), factorial(n) / symmetry_factor(p));
            // Distinct as set partitions (blocks of equal size unordered).
            std::set<std::set<std::vector<int>>> seen;
            for (const auto& a : as) {
                std::vector<int> all;
                for (std::size_t b = 0; b < a.size(); ++b) {
                    EXPECT_EQ(static_cast<int>(a[b].size()), p.parts[b]);
                    all.insert(all.end(), a[b].begin(), a[b].end());
                }
                std::sort(all.begin(), all.end());
                for (int v = 1; v <= n; ++v) EXPECT_EQ(all[static_cast<std::size_t>(v - 1)], v);
                seen.insert(std::set<std::vector<int>>(a.begin(), a.end()));
            }
            EXPECT_EQ(seen.size(), as.size());
        }
    }
}

TEST(Adjacency, TableCounts) {
    EXPECT_EQ(enumerate_adjacency(1).size(), 1u);
    EXPECT_EQ(enumerate_adjacency(2).size(), 1u);
    const auto a3 = enumerate_adjacency(3);
    ASSERT_EQ(a3.size(), 3u);
    const std::set<AdjacencyMatrix> s(a3.begin(), a3.end());
    EXPECT_TRUE(s.count(mat(3, {0, 1, 2, 0, 0, 0, 0, 0, 0})));
    EXPECT_TRUE(s.count(mat(3, {0, 1, 1, 0, 0, 0, 0, 0, 0})));
    EXPECT_TRUE(s.count(mat(3, {0, 1, 0, 0, 0, 1, 0, 0, 0})));
}

TEST(Adjacency, ExtensionEqualsBruteForceFilter) {
    for (int n = 1; n <= 5; ++n) {
        const auto ext = enumerate_adjacency(n);
        const std::set<AdjacencyMatrix> s(ext.begin(), ext.end());
        EXPECT_EQ(s.size(), ext.size()) << "duplicate extension at N=" << n;
        const auto bf = brute_force(n);
        EXPECT_EQ(std::set<AdjacencyMatrix>(bf.begin(), bf.end()), s) << "N=" << n;
        for (const auto& a : ext) EXPECT_TRUE(is_allowed(a));
    }
    EXPECT_EQ(enumerate_adjacency(4).size(), 14u); // 5 + 4 + 5 extensions of the three N=3 trees
}

TEST(Adjacency, MaxAlphaIsNMinusOne) {
    for (int n = 1; n <= 6; ++n) {
        int m = 0;
        for (const auto& a : enumerate_adjacency(n)) m = std::max(m, alpha(a));
        EXPECT_EQ(m, n - 1);
    }
}

TEST(Adjacency, MembershipRules) {
    EXPECT_FALSE(is_allowed(mat(2, {0, 0, 1, 0})));                 // below diagonal
    EXPECT_FALSE(is_allowed(mat(3, {0, 1, 0, 0, 0, 0, 0, 0, 0})));  // orphan vertex 3
    EXPECT_FALSE(is_allowed(mat(3, {0, 2, 0, 0, 0, 1, 0, 0, 0})));  // arrow-head count skips 1
    EXPECT_FALSE(is_allowed(mat(3, {0, 1, 1, 0, 0, 1, 0, 0, 0})));  // two parents
    EXPECT_TRUE(is_allowed(AdjacencyMatrix(1)));
}

TEST(Adjacency, AlphaBetaMultiplicity) {
    const auto single = AdjacencyMatrix(1);
    const auto chain = mat(3, {0, 1, 0, 0, 0, 1, 0, 0, 0});
    const auto star2 = mat(3, {0, 1, 2, 0, 0, 0, 0, 0, 0});
    const auto star3 = mat(4, {0, 1, 2, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    const auto fan = mat(4, {0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
    EXPECT_EQ(alpha(single), 0);
    EXPECT_EQ(alpha(chain), 1);
    EXPECT_EQ(alpha(star3), 3);
    EXPECT_EQ(beta(chain, 1), 0);
    EXPECT_EQ(beta(chain, 3), 2);
    EXPECT_EQ(beta(star2, 3), 1);
    EXPECT_EQ(multiplicity(fan, 1, 1), 3);
    EXPECT_EQ(multiplicity(chain, 1, 1), 1);
    EXPECT_EQ(multiplicity(star2, 3, 1), 0);
    EXPECT_EQ(star2.out_propagators(1), 2);
}

TEST(Adjacency, DotRendering) {
    const auto one = to_dot(AdjacencyMatrix(1));
    EXPECT_EQ(one.find("->"), std::string::npos);
    EXPECT_NE(one.find("v1"), std::string::npos);
    const auto chain = to_dot(mat(3, {0, 1, 0, 0, 0, 1, 0, 0, 0}));
    EXPECT_NE(chain.find("v1 -> v2 [label=\"1\"]"), std::string::npos);
    EXPECT_NE(chain.find("v2 -> v3 [label=\"1\"]"), std::string::npos);
    const auto s = to_dot(mat(3, {0, 1, 2, 0, 0, 0, 0, 0, 0}));
    EXPECT_NE(s.find("v1 -> v3 [label=\"2\"]"), std::string::npos);
}

TEST(Adjacency, JsonRoundTrip) {
    for (const auto& a : enumerate_adjacency(4)) EXPECT_EQ(adjacency_from_json(to_json(a)), a);
    EXPECT_EQ(to_json(enumerate_adjacency(3)).size(), 3u);
}
