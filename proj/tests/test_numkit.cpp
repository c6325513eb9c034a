#include "nnpt/numkit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace nnpt;

TEST(Binomial, SmallValues) {
    EXPECT_EQ(binomial(5, 2), 10u);
    EXPECT_EQ(binomial(7, 0), 1u);
    EXPECT_EQ(binomial(3, 5), 0u);
    EXPECT_EQ(binomial(34, 17), 2333606220u);
    EXPECT_EQ(ipow(3, 4), 81u);
}

TEST(DenseMatrix, ShapeAndProducts) {
    DenseMatrix a(2, 3, Vector{1, 2, 3, 4, 5, 6});
    EXPECT_EQ(a(1, 2), 6.0);
    const DenseMatrix at = a.transposed();
    EXPECT_EQ(at.rows(), 3u);
    EXPECT_EQ(at(2, 1), 6.0);
    const DenseMatrix p = matmul(a, at);
    EXPECT_EQ(p(0, 0), 14.0);
    EXPECT_EQ(p(0, 1), 32.0);
    EXPECT_EQ(p(1, 1), 77.0);
    EXPECT_EQ(matvec(a, Vector{1, 0, -1}), (Vector{-2, -2}));
    EXPECT_TRUE(matmul(DenseMatrix::identity(2), a) == a);
    EXPECT_THROW(DenseMatrix(2, 2, Vector{1, 2, 3}), ShapeError);
    EXPECT_THROW(matmul(a, a), ShapeError);
    a(0, 0) = std::nan("");
    EXPECT_FALSE(a.all_finite());
}

TEST(SymTensor, StorageSizeIsMultisetCount) {
    for (std::size_t k = 1; k <= 4; ++k)
        for (std::size_t d = 1; d <= 6; ++d) EXPECT_EQ(SymTensor(k, d).size(), binomial(d + k - 1, k));
}

TEST(SymTensor, PackedIndexIsLexicographicRank) {
    const SymTensor t(3, 4);
    std::size_t expected = 0;
    t.for_each_tuple([&](std::span<const std::size_t> idx) {
        EXPECT_EQ(t.index_of(idx), expected);
        ++expected;
    });
    EXPECT_EQ(expected, t.size());
}

TEST(SymTensor, EveryPermutationAddressesTheSameSlot) {
    for (std::size_t k = 1; k <= 3; ++k) {
        for (std::size_t d = 1; d <= 5; ++d) {
            SymTensor t(k, d);
            for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = 1.0 + static_cast<double>(i);
            // every tuple of the full grid
            std::vector<std::size_t> idx(k, 0);
            for (std::size_t flat = 0; flat < ipow(d, k); ++flat) {
                std::size_t rem = flat;
                for (std::size_t p = 0; p < k; ++p) {
                    idx[p] = rem % d;
                    rem /= d;
                }
                std::vector<std::size_t> s = idx;
                std::sort(s.begin(), s.end());
                const double want = t.at(s);
                do {
                    EXPECT_EQ(t.at(idx), want);
                } while (std::next_permutation(idx.begin(), idx.end()));
                // write through a permutation and read back sorted
                t.at(idx) = want;
                EXPECT_EQ(t.at(s), want);
            }
        }
    }
}

TEST(SymTensor, SymmetrizeAndDenseRoundTrip) {
    DenseTensor dense({3, 3});
    dense.at({0, 1}) = 2.0;
    dense.at({1, 0}) = 4.0;
    dense.at({2, 2}) = 5.0;
    const SymTensor s = SymTensor::symmetrize(dense);
    EXPECT_EQ(s.at({1, 0}), 3.0);
    EXPECT_EQ(s.at({2, 2}), 5.0);
    const DenseTensor back = s.to_dense();
    EXPECT_EQ(back.at({0, 1}), 3.0);
    EXPECT_EQ(back.at({1, 0}), 3.0);
    EXPECT_THROW(SymTensor::symmetrize(DenseTensor({2, 3})), ShapeError);
    EXPECT_THROW(SymTensor(2, 3).at({0, 3}), ShapeError);
}

TEST(FiniteDiff, ExactOnQuadratics) {
    const ScalarField sq = [](std::span<const double> x) { return x[0] * x[0]; };
    EXPECT_NEAR(finite_diff(sq, Vector{0.0}, {0, 0}, 1e-3), 2.0, 1e-8);
    const ScalarField prod = [](std::span<const double> x) { return x[0] * x[1]; };
    EXPECT_NEAR(finite_diff(prod, Vector{0.0, 0.0}, {0, 1}, 1e-3), 1.0, 1e-8);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 20; ++t) {
        const double a = nd(rng), b = nd(rng), c = nd(rng), e = nd(rng);
        const ScalarField q = [=](std::span<const double> x) { return a * x[0] * x[0] + b * x[0] * x[1] + c * x[1] + e; };
        const Vector x0{nd(rng), nd(rng)};
        EXPECT_NEAR(finite_diff(q, x0, {0}, 1e-4), 2 * a * x0[0] + b * x0[1], 1e-8);
        EXPECT_NEAR(finite_diff(q, x0, {1}, 1e-4), b * x0[0] + c, 1e-8);
        EXPECT_NEAR(finite_diff(q, x0, {0, 0}, 1e-4), 2 * a, 1e-6 * std::max(1.0, std::abs(a)) * 10);
        EXPECT_NEAR(finite_diff(q, x0, {1, 0}, 1e-4), b, 1e-6 * std::max(1.0, std::abs(b)) * 10);
    }
}

TEST(FiniteDiff, ThirdOrderMixedPartial) {
    const ScalarField f = [](std::span<const double> x) { return std::sin(x[0]) * std::exp(x[1]) * x[2]; };
    const Vector x0{0.3, -0.2, 1.1};
    EXPECT_NEAR(finite_diff(f, x0, {0, 1, 2}, default_fd_step(3)), std::cos(0.3) * std::exp(-0.2), 1e-4);
    EXPECT_NEAR(finite_diff(f, x0, {0, 0, 0}, default_fd_step(3)), -std::cos(0.3) * std::exp(-0.2) * 1.1, 1e-4);
}

TEST(FiniteDiff, Errors) {
    const ScalarField f = [](std::span<const double> x) { return x[0]; };
    EXPECT_THROW(finite_diff(f, Vector{0.0}, {0, 0, 0, 0}, 1e-3), UnsupportedOrder);
    EXPECT_THROW(finite_diff(f, Vector{0.0}, {0}, 0.0), std::invalid_argument);
    const ScalarField bad = [](std::span<const double> x) { return 1.0 / x[0]; };
    EXPECT_THROW(finite_diff(bad, Vector{1e-3}, {0}, 1e-3), NonFiniteSample);
}

TEST(Lstsq1Param, Examples) {
    EXPECT_DOUBLE_EQ(lstsq_1param(Vector{1, 2}, Vector{2, 4}), 2.0);
    EXPECT_EQ(lstsq_1param(Vector{1, 0}, Vector{0, 5}), 0.0);
    Vector d, t;
    for (int k = 1; k <= 32; ++k) {
        d.push_back(k * k);
        t.push_back(k * k / 32768.0);
    }
    EXPECT_NEAR(lstsq_1param(d, t), 3.0517578125e-5, 1e-20);
    EXPECT_THROW(lstsq_1param(Vector{0, 0}, Vector{1, 2}), DegenerateFit);
    EXPECT_THROW(lstsq_1param(Vector{}, Vector{}), ShapeError);
}

TEST(Lstsq1Param, ResidualOrthogonalToDesign) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 10; ++trial) {
        Vector d(17), t(17);
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] = nd(rng);
            t[i] = nd(rng);
        }
        const double c = lstsq_1param(d, t);
        double r = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) r += (c * d[i] - t[i]) * d[i];
        EXPECT_NEAR(r, 0.0, 1e-10);
    }
}

TEST(MeanStd, PopulationStatistics) {
    const auto s = mean_std(Vector{1, 2, 3, 4});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_DOUBLE_EQ(s.std, std::sqrt(1.25));
    EXPECT_EQ(mean_std(Vector{7}).std, 0.0);
}
