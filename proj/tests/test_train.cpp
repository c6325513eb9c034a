#include "nnpt/train.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

using namespace nnpt;

namespace {

SampleSet toy_data(std::size_t n, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-1.0, 1.0);
    SampleSet s{DenseMatrix(n, dim), Vector(n)};
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            s.x(i, k) = ux(rng);
            acc += s.x(i, k) * static_cast<double>(k + 1) / static_cast<double>(dim);
        }
        s.y[i] = -0.5 - 0.2 * std::tanh(acc);
    }
    return s;
}

Mlp one_one_one(double w1, double b1, double w2) {
    return Mlp({1, 1, 1}, {DenseMatrix(1, 1, w1), DenseMatrix(1, 1, w2)}, {Vector{b1}, Vector{0.0}},
               {Activation(ActivationKind::Tanh), Activation(ActivationKind::Identity)});
}

} // namespace

TEST(LrSchedule, FormulaValues) {
    TrainConfig c;
    c.eta_bar = 2.0;
    EXPECT_NEAR(lr_at_epoch(c, 1), 1e-2, 1e-17);
    EXPECT_NEAR(lr_at_epoch(c, 3), std::exp(-1.0) * 1e-2, 1e-16);
    EXPECT_NEAR(lr_at_epoch(c, 3), 3.6788e-3, 1e-7);
    c.eta_bar = 3.0;
    EXPECT_NEAR(lr_at_epoch(c, 1), 1e-3, 1e-18);
}

TEST(LrSchedule, StrictlyDecreasingAndBounded) {
    TrainConfig c;
    c.eta_bar = 2.37;
    for (int e = 2; e <= c.epochs; ++e) EXPECT_LT(lr_at_epoch(c, e), lr_at_epoch(c, e - 1));
    EXPECT_THROW(lr_at_epoch(c, 0), std::out_of_range);
    EXPECT_THROW(lr_at_epoch(c, c.epochs + 1), std::out_of_range);
}

TEST(WeightDecay, VanishesForLargeLambdaBar) {
    TrainConfig c;
    c.lambda_bar = 4.0;
    EXPECT_DOUBLE_EQ(weight_decay(c), 1e-4);
    c.lambda_bar = 400.0;
    EXPECT_EQ(1.0 - 1e-2 * weight_decay(c), 1.0);
}

TEST(Mape, Examples) {
    const Vector t{-0.3, -0.7, -1.0};
    EXPECT_EQ(mape(t, t), 0.0);
    EXPECT_DOUBLE_EQ(mape(Vector{-0.5}, Vector{-1.0}), 0.5);
    Vector p = t;
    for (double& v : p) v *= 1.001;
    EXPECT_NEAR(mape(p, t), 1e-3, 1e-15);
}

TEST(Mape, FloorExcludesAndCounts) {
    const auto s = mape_stats(Vector{1.0, -0.5, 7.0}, Vector{1e-4, -1.0, 0.0}, 1e-3);
    EXPECT_EQ(s.used, 1u);
    EXPECT_EQ(s.excluded, 2u);
    EXPECT_DOUBLE_EQ(s.mape, 0.5);
    EXPECT_THROW(mape(Vector{1.0}, Vector{0.0}), std::invalid_argument);
    EXPECT_THROW(mape(Vector{1.0, 2.0}, Vector{1.0}), ShapeError);
}

TEST(Backprop, MatchesFiniteDifferencesOnThreeParameterNet) {
    const SampleSet batch{DenseMatrix(4, 1, Vector{-0.8, -0.1, 0.4, 0.9}), Vector{-0.9, -0.3, -0.6, -0.2}};
    const double w1 = 0.7, b1 = -0.2, w2 = 1.3;
    double loss = 0.0;
    const auto g = mape_gradient(one_one_one(w1, b1, w2), batch, &loss);

    auto objective = [&](double a, double b, double c) {
        const Mlp net = one_one_one(a, b, c);
        return mape(predict_rows(net, batch.x), batch.y, 0.0);
    };
    EXPECT_NEAR(loss, objective(w1, b1, w2), 1e-14);
    const double h = 1e-6;
    const double fd_w1 = (objective(w1 + h, b1, w2) - objective(w1 - h, b1, w2)) / (2 * h);
    const double fd_b1 = (objective(w1, b1 + h, w2) - objective(w1, b1 - h, w2)) / (2 * h);
    const double fd_w2 = (objective(w1, b1, w2 + h) - objective(w1, b1, w2 - h)) / (2 * h);
    EXPECT_LT(testutil::rel_err(g.w[0](0, 0), fd_w1), 1e-4);
    EXPECT_LT(testutil::rel_err(g.b[0][0], fd_b1), 1e-4);
    EXPECT_LT(testutil::rel_err(g.w[1](0, 0), fd_w2), 1e-4);
}

TEST(Backprop, MatchesFiniteDifferencesOnDeeperGeluNet) {
    const Mlp net = testutil::random_mlp({3, 5, 4, 1}, ActivationKind::Gelu, 11, 1.0);
    const SampleSet batch = toy_data(9, 3, 5);
    const auto g = mape_gradient(net, batch);
    const double h = 1e-6;
    for (std::size_t l = 1; l <= net.num_layers(); ++l) {
        for (std::size_t idx = 0; idx < net.weight(l).data().size(); idx += 3) {
            Mlp p = net, m = net;
            p.weight(l).data()[idx] += h;
            m.weight(l).data()[idx] -= h;
            const double fd = (mape(predict_rows(p, batch.x), batch.y, 0.0) - mape(predict_rows(m, batch.x), batch.y, 0.0)) / (2 * h);
            EXPECT_LT(testutil::rel_err(g.w[l - 1].data()[idx], fd, 1e-6), 1e-4) << "layer " << l << " entry " << idx;
        }
    }
}

TEST(Backprop, SubgradientZeroAtExactFit) {
    const Mlp net = one_one_one(0.5, 0.0, 2.0);
    const double x = 0.3;
    const double y = predict(net, Vector{x});
    const auto g = mape_gradient(net, SampleSet{DenseMatrix(1, 1, x), Vector{y}});
    EXPECT_EQ(g.w[0](0, 0), 0.0);
    EXPECT_EQ(g.w[1](0, 0), 0.0);
    EXPECT_EQ(g.b[0][0], 0.0);
}

TEST(TrainMember, ConstantTargetConverges) {
    SampleSet d = toy_data(4096, 4, 3);
    for (double& v : d.y) v = -0.4;
    TrainConfig c;
    c.epochs = 20;
    c.batch_size = 32;
    c.eta_bar = 2.0;
    c.seed = 17;
    Mlp net = he_init({4, 32, 32, 1}, {Activation(ActivationKind::Gelu)}, 1);
    net = train_member(std::move(net), d, c);
    EXPECT_LT(mape(predict_rows(net, d.x), d.y), 1e-2);
}

TEST(TrainMember, DeterministicAndLogged) {
    const SampleSet d = toy_data(300, 5, 8), t = toy_data(50, 5, 9);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 64; // 300 = 4 * 64 + 44: the last batch is partial
    c.seed = 5;
    const Mlp init = he_init({5, 16, 16, 1}, {Activation(ActivationKind::Gelu)}, 2);
    TrainLog log;
    const Mlp a = train_member(init, d, c, &t, &log, 3);
    const Mlp b = train_member(init, d, c);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == init);
    EXPECT_EQ(a.bias(a.num_layers())[0], 0.0);

    const auto rows = log.rows();
    ASSERT_EQ(rows.size(), 3u);
    for (int e = 0; e < 3; ++e) {
        EXPECT_EQ(rows[e].epoch, e + 1);
        EXPECT_EQ(rows[e].member_id, 3);
        EXPECT_DOUBLE_EQ(rows[e].lr, lr_at_epoch(c, e + 1));
        EXPECT_TRUE(std::isfinite(rows[e].test_mape));
    }
    std::ostringstream os;
    log.write_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "epoch,member_id,train_mape,test_mape,lr");

    c.seed = 6;
    EXPECT_FALSE(train_member(init, d, c) == a);
}

TEST(TrainMember, DivergenceRaisesWithEpoch) {
    SampleSet d = toy_data(64, 2, 1);
    TrainConfig c;
    c.epochs = 2;
    Mlp net = he_init({2, 8, 1}, {Activation(ActivationKind::Tanh)}, 0);
    net.weight(1)(0, 0) = 1e308;
    net.weight(2)(0, 0) = 1e308;
    try {
        train_member(net, d, c);
        FAIL() << "expected TrainingDiverged";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.epoch(), 1);
    }
}

TEST(TrainMember, RejectsBadInput) {
    const Mlp net = he_init({3, 8, 1}, {Activation(ActivationKind::Tanh)}, 0);
    EXPECT_THROW(train_member(net, toy_data(10, 2, 0), TrainConfig{}), ShapeError);
    SampleSet tiny = toy_data(10, 3, 0);
    for (double& v : tiny.y) v = 0.0;
    EXPECT_THROW(train_member(net, tiny, TrainConfig{}), std::invalid_argument);
}

TEST(Ensemble, MemberDrawsWithinRanges) {
    EnsembleSpec s;
    s.master_seed = 99;
    std::set<std::size_t> depths;
    for (std::size_t i = 0; i < 200; ++i) {
        const auto mi = draw_member(s, 16, i, 0);
        const std::size_t L = mi.layer_dims.size() - 1;
        depths.insert(L);
        EXPECT_GE(L, 3u);
        EXPECT_LE(L, 10u);
        EXPECT_EQ(mi.layer_dims.front(), 16u);
        EXPECT_EQ(mi.layer_dims.back(), 1u);
        for (std::size_t l = 1; l < L; ++l) {
            EXPECT_GE(mi.layer_dims[l], 16u);
            EXPECT_LE(mi.layer_dims[l], 256u);
        }
        EXPECT_GE(mi.eta_bar, 2.0);
        EXPECT_LE(mi.eta_bar, 3.0);
        EXPECT_GE(mi.lambda_bar, 3.0);
        EXPECT_LE(mi.lambda_bar, 5.0);
    }
    EXPECT_EQ(depths.size(), 8u);
    EXPECT_NE(member_seed(99, 0, 0), member_seed(99, 0, 1));
    EXPECT_NE(member_seed(99, 0, 0), member_seed(99, 1, 0));
}

namespace {
EnsembleSpec small_spec(std::size_t n, std::size_t threads) {
    EnsembleSpec s;
    s.n_members = n;
    s.depth_min = 2;
    s.depth_max = 3;
    s.width_min = 8;
    s.width_max = 16;
    s.epochs = 2;
    s.batch_size = 32;
    s.master_seed = 4;
    s.threads = threads;
    return s;
}
} // namespace

TEST(Ensemble, PredictionIsMemberMean) {
    const SampleSet d = toy_data(128, 3, 2);
    const Ensemble e = train_ensemble(small_spec(3, 1), d);
    ASSERT_EQ(e.size(), 3u);
    const Vector x{0.1, -0.2, 0.3};
    const double mean = (predict(e.members[0], x) + predict(e.members[1], x) + predict(e.members[2], x)) / 3.0;
    EXPECT_EQ(predict(e, x), mean);

    const Ensemble one = train_ensemble(small_spec(1, 1), d);
    EXPECT_EQ(predict(one, x), predict(one.members[0], x));
}

TEST(Ensemble, IndependentOfThreadCount) {
    const SampleSet d = toy_data(128, 3, 2), t = toy_data(40, 3, 3);
    TrainLog l1, l2;
    const Ensemble a = train_ensemble(small_spec(3, 1), d, &t, &l1);
    const Ensemble b = train_ensemble(small_spec(3, 3), d, &t, &l2);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a.members[i] == b.members[i]);
    std::ostringstream s1, s2;
    l1.write_csv(s1);
    l2.write_csv(s2);
    EXPECT_EQ(s1.str(), s2.str());
    EXPECT_TRUE(std::isfinite(ensemble_mape(a, t).mape));
}

TEST(Ensemble, SaveLoadRoundTrip) {
    const SampleSet d = toy_data(64, 3, 2), t = toy_data(20, 3, 3);
    Ensemble e = train_ensemble(small_spec(2, 1), d, &t);
    e.iteration = 2;
    e.target_scale = 0.125;
    const auto dir = std::filesystem::temp_directory_path() / "nnpt_test_ensemble";
    std::filesystem::remove_all(dir);
    save_ensemble(e, dir);
    const Ensemble r = load_ensemble(dir);
    EXPECT_EQ(r.iteration, 2);
    EXPECT_EQ(r.target_scale, 0.125);
    ASSERT_EQ(r.size(), e.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        EXPECT_TRUE(r.members[i] == e.members[i]);
        EXPECT_EQ(r.info[i].seed, e.info[i].seed);
        EXPECT_EQ(r.info[i].test_mape, e.info[i].test_mape);
    }
    std::ostringstream os;
    write_member_mape_csv(os, r);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "member_id,depth,eta_bar,lambda_bar,test_mape");

    std::filesystem::remove(dir / "manifest.json");
    try {
        load_ensemble(dir);
        FAIL() << "expected MissingArtifact";
    } catch (const MissingArtifact& e) {
        EXPECT_NE(std::string(e.what()).find("manifest.json"), std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

TEST(FilterByFloor, DropsSmallTargets) {
    SampleSet d = toy_data(5, 2, 0);
    d.y[1] = 1e-5;
    d.y[3] = -2e-4;
    std::size_t ex = 0;
    const auto f = filter_by_floor(d, 1e-3, &ex);
    EXPECT_EQ(ex, 2u);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f.y[1], d.y[2]);
    EXPECT_EQ(f.x(1, 1), d.x(2, 1));
}
