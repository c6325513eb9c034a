#include "nnpt/mlp.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace nnpt;

TEST(Activation, Examples) {
    const Activation id(ActivationKind::Identity), gelu(ActivationKind::Gelu);
    EXPECT_EQ(activation_deriv(id, 1, 3.7), 1.0);
    EXPECT_EQ(activation_deriv(id, 2, 3.7), 0.0);
    EXPECT_EQ(activation_deriv(gelu, 0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(activation_deriv(gelu, 1, 0.0), 0.5);
    EXPECT_THROW(activation_deriv(gelu, 5, 0.0), UnsupportedOrder);
    EXPECT_THROW(Activation(ActivationKind::Tanh, 3), std::invalid_argument);
}

TEST(Activation, ClosedFormsAtSelectedPoints) {
    const Activation th(ActivationKind::Tanh), gelu(ActivationKind::Gelu);
    const double x = 0.7, t = std::tanh(x);
    EXPECT_NEAR(th.deriv(1, x), 1 - t * t, 1e-15);
    EXPECT_NEAR(th.deriv(2, x), -2 * t * (1 - t * t), 1e-15);
    EXPECT_NEAR(th.deriv(3, x), -2 * (1 - t * t) * (1 - 3 * t * t), 1e-14);
    const double phi = std::exp(-x * x / 2) / std::sqrt(2 * std::numbers::pi);
    EXPECT_NEAR(gelu.deriv(2, x), phi * (2 - x * x), 1e-15);
    EXPECT_NEAR(gelu.deriv(3, x), phi * (x * x * x - 4 * x), 1e-15);
    EXPECT_NEAR(gelu.deriv(0, x), x * 0.5 * std::erfc(-x / std::sqrt(2.0)), 1e-15);
}

class ActivationFd : public ::testing::TestWithParam<ActivationKind> {};

TEST_P(ActivationFd, EachDerivativeMatchesDifferenceOfThePrevious) {
    const Activation a(GetParam());
    for (int p = 1; p <= 4; ++p) {
        for (double x = -3.0; x <= 3.0 + 1e-9; x += 0.25) {
            auto central = [&](double h) { return (a.deriv(p - 1, x + h) - a.deriv(p - 1, x - h)) / (2 * h); };
            const double fd = (4.0 * central(5e-4) - central(1e-3)) / 3.0;
            EXPECT_LT(testutil::rel_err(a.deriv(p, x), fd, 1e-6), 1e-5) << "p=" << p << " x=" << x;
        }
    }
}

INSTANTIATE_TEST_SUITE_P(Kinds, ActivationFd, ::testing::Values(ActivationKind::Tanh, ActivationKind::Gelu),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Activation, NamesRoundTrip) {
    for (auto k : {ActivationKind::Identity, ActivationKind::Tanh, ActivationKind::Gelu})
        EXPECT_EQ(activation_from_string(to_string(k)), k);
    EXPECT_THROW(activation_from_string("relu"), std::invalid_argument);
}

TEST(Forward, ZeroWeightsGiveZero) {
    Mlp net = testutil::random_mlp({3, 4, 1}, ActivationKind::Tanh, 1);
    for (std::size_t l = 1; l <= 2; ++l) net.weight(l) *= 0.0;
    net.bias(1) = Vector(4, 0.0);
    EXPECT_EQ(predict(net, Vector{1.0, -2.0, 3.0}), 0.0);
}

TEST(Forward, OneOneOneTanhAtZero) {
    const Mlp net({1, 1, 1}, {DenseMatrix(1, 1, 1.0), DenseMatrix(1, 1, 1.0)}, {Vector{0.0}, Vector{0.0}},
                  {Activation(ActivationKind::Tanh), Activation(ActivationKind::Identity)});
    EXPECT_EQ(predict(net, Vector{0.0}), 0.0);
    EXPECT_DOUBLE_EQ(predict(net, Vector{0.5}), std::tanh(0.5));
}

TEST(Forward, MatchesHandUnrolledComposition) {
    const Mlp net = testutil::random_mlp({2, 3, 2, 1}, ActivationKind::Gelu, 9);
    const Vector x{0.4, -1.2};
    const Activation g(ActivationKind::Gelu);
    const auto& w1 = net.weight(1);
    const auto& w2 = net.weight(2);
    const auto& w3 = net.weight(3);
    double y1[3], y2[2];
    for (int i = 0; i < 3; ++i) y1[i] = g(w1(i, 0) * x[0] + w1(i, 1) * x[1] + net.bias(1)[i]);
    for (int i = 0; i < 2; ++i) y2[i] = g(w2(i, 0) * y1[0] + w2(i, 1) * y1[1] + w2(i, 2) * y1[2] + net.bias(2)[i]);
    const double out = w3(0, 0) * y2[0] + w3(0, 1) * y2[1];
    const auto tr = forward(net, x);
    EXPECT_NEAR(tr.output()[0], out, 1e-15);
    ASSERT_EQ(tr.num_layers(), 3u);
    EXPECT_EQ(tr.z[0], x);
    for (std::size_t l = 1; l <= 3; ++l)
        for (std::size_t m = 0; m < tr.z[l].size(); ++m) EXPECT_EQ(tr.y[l][m], net.activation(l)(tr.z[l][m]));
    EXPECT_THROW(forward(net, Vector{1.0}), ShapeError);
}

TEST(Mlp, ValidatesStructure) {
    const auto w = [](std::size_t r, std::size_t c) { return DenseMatrix(r, c, 0.1); };
    const Activation t(ActivationKind::Tanh), id(ActivationKind::Identity);
    EXPECT_THROW(Mlp({2, 1}, {w(1, 2)}, {Vector{0.0}}, {id}), ShapeError);
    EXPECT_THROW(Mlp({2, 3, 1}, {w(3, 2), w(1, 2)}, {Vector(3), Vector(1)}, {t, id}), ShapeError);
    EXPECT_THROW(Mlp({2, 3, 1}, {w(3, 2), w(1, 3)}, {Vector(3), Vector(1)}, {t, t}), std::invalid_argument);
    EXPECT_THROW(Mlp({2, 3, 1}, {w(3, 2), w(1, 3)}, {Vector(3), Vector{0.5}}, {t, id}), std::invalid_argument);
    EXPECT_NO_THROW(Mlp({2, 3, 1}, {w(3, 2), w(1, 3)}, {Vector(3), Vector(1)}, {t, id}));
}

TEST(HeInit, DeterministicWithZeroBiases) {
    const std::vector<std::size_t> dims{32, 64, 1};
    const Mlp a = he_init(dims, {Activation(ActivationKind::Gelu)}, 3);
    const Mlp b = he_init(dims, {Activation(ActivationKind::Gelu)}, 3);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == he_init(dims, {Activation(ActivationKind::Gelu)}, 4));
    EXPECT_EQ(a.bias(2)[0], 0.0);
    for (double v : a.bias(1)) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(a.activation(2).kind(), ActivationKind::Identity);

    double ss = 0.0;
    for (double v : a.weight(1).data()) ss += v * v;
    const double var = ss / static_cast<double>(a.weight(1).size());
    EXPECT_NEAR(var, 2.0 / 32.0, 0.2 * 2.0 / 32.0);
}

TEST(MlpJson, RoundTripIsBitExact) {
    const Mlp net = testutil::random_mlp({4, 7, 5, 1}, ActivationKind::Tanh, 21);
    const auto j = to_json(net);
    EXPECT_EQ(j["format"], "nnpt.mlp");
    const Mlp back = mlp_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_TRUE(back == net);
    auto bad = j;
    bad["version"] = 99;
    EXPECT_THROW(mlp_from_json(bad), std::invalid_argument);
}
