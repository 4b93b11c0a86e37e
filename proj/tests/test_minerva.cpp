#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "minerva/errors.hpp"
#include "minerva/minerva.hpp"
#include "support.hpp"

using namespace minerva;

namespace {

std::vector<std::size_t> iota_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

/// Three categorical features of cardinality 4; the target copies feature 1.
Dataset copy_target(std::size_t n, std::uint64_t seed) {
    Dataset d = testing_support::random_dataset({4, 4, 4}, 0, n, 4, seed);
    d.target.codes = d.features[1].codes;
    return d;
}

TrainConfig quick_config(std::uint64_t seed) {
    TrainConfig c;
    c.batch_size = 256;
    c.stage1_max_steps = 600;
    c.stage2_max_steps = 2000;
    c.patience = 1000;
    c.eval_every = 100;
    c.eval_batches = 5;
    c.seed = seed;
    return c;
}

} // namespace

TEST(Regularizer, Examples) {
    const std::size_t d = 9;
    EXPECT_NEAR(regularizer(std::vector<double>(d, 1.0), 1.0, 0.0, 3.0), 3.0, 1e-12);
    EXPECT_NEAR(regularizer(std::vector<double>(d, 1.0), 2.5, 1.0, 3.0), 7.5, 1e-12);
    EXPECT_NEAR(regularizer({0.0, 1.0, 0.0}, 1.0, 0.0, 1.0), 1.0, 1e-15);
    EXPECT_NEAR(regularizer({3.0, 4.0}, 1.0, 0.0, 1.0), 7.0 / 5.0, 1e-15);
    // Drift alone: (5 - 2)^2.
    EXPECT_NEAR(regularizer({3.0, -4.0}, 0.0, 1.0, 2.0), 9.0, 1e-12);
}

TEST(Regularizer, NormalisedL1IsScaleInvariant) {
    Philox rng(1, 0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(1 + rng.index(12));
        for (double& v : p) {
            v = rng.uniform(-3.0, 3.0);
        }
        const double lambda = rng.uniform(1e-3, 1e3);
        std::vector<double> q = p;
        for (double& v : q) {
            v *= lambda;
        }
        EXPECT_NEAR(regularizer(q, 1.0, 0.0, 1.0), regularizer(p, 1.0, 0.0, 1.0), 1e-10);
        // Between 1 and sqrt(d).
        const double r = regularizer(p, 1.0, 0.0, 1.0);
        EXPECT_GE(r, 1.0 - 1e-12);
        EXPECT_LE(r, std::sqrt(static_cast<double>(p.size())) + 1e-12);
    }
}

TEST(Regularizer, DegenerateWeights) {
    EXPECT_THROW(regularizer({0.0, 0.0}, 1.0, 1.0, 1.0), DegenerateWeightsError);
    EXPECT_THROW(regularizer({1e-13, 0.0}, 1.0, 1.0, 1.0), NumericError);
}

TEST(Loss, DecomposesIntoItsTerms) {
    const Dataset d = testing_support::random_dataset({3, 5}, 2, 64, 0, 3);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 8, 1);
    const StatNetParams params = statnet::init_params(spec, 4);
    Philox rng(5, 0);
    mine::Batch batch{iota_rows(64), mine::sample_permutation(64, rng)};
    const std::vector<double> p{0.5, -1.5, 2.0, 0.25};
    for (const auto& [c1, c2, a] : std::vector<std::tuple<double, double, double>>{
             {1.0, 1.0, 2.0}, {0.0, 0.0, 2.0}, {3.0, 0.5, 0.7}}) {
        Graph g;
        const NodeId p_node = g.parameter(Tensor::vector(p));
        statnet::BoundNetwork net(g, spec, params, p_node, d);
        const LossNodes l = loss(g, net, p_node, c1, c2, a, batch);
        const double v = g.value(l.v).item();
        EXPECT_NEAR(g.value(l.total).item(), v + regularizer(p, c1, c2, a), 1e-10);
        EXPECT_NEAR(v, l.estimate.value, 1e-12);
        EXPECT_NEAR(l.sparsity, regularizer(p, 1.0, 0.0, 0.0), 1e-12);
        EXPECT_NEAR(l.drift, regularizer(p, 0.0, 1.0, a), 1e-12);
    }
}

TEST(Loss, GradientInWeightsMatchesFiniteDifferences) {
    const Dataset d = testing_support::random_dataset({3}, 2, 48, 2, 6);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 6, 2);
    const StatNetParams params = statnet::init_params(spec, 7);
    Philox rng(8, 0);
    mine::Batch batch{iota_rows(48), mine::sample_permutation(48, rng)};
    const std::vector<double> p{0.8, -0.3, 1.7};
    auto value = [&](const std::vector<double>& q) {
        Graph g(false);
        const NodeId p_node = g.constant(Tensor::vector(q));
        statnet::BoundNetwork net(g, spec, params, p_node, d, false);
        return g.value(loss(g, net, p_node, 1.3, 0.7, 1.5, batch).total).item();
    };
    Graph g;
    const NodeId p_node = g.parameter(Tensor::vector(p));
    statnet::BoundNetwork net(g, spec, params, p_node, d);
    g.backward(loss(g, net, p_node, 1.3, 0.7, 1.5, batch).total);
    const double h = 1e-6;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto up = p;
        auto down = p;
        up[i] += h;
        down[i] -= h;
        const double numeric = (value(up) - value(down)) / (2.0 * h);
        EXPECT_LT(testing_support::rel_error(g.grad(p_node)[i], numeric), 1e-5) << "p_" << i;
    }
}

TEST(Loss, ZeroWeightsAreDegenerate) {
    const Dataset d = testing_support::random_dataset({3}, 1, 8, 0, 1);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 4, 1);
    const StatNetParams params = statnet::init_params(spec, 0);
    Philox rng(0, 0);
    mine::Batch batch{iota_rows(8), mine::sample_permutation(8, rng)};
    Graph g;
    const NodeId p_node = g.parameter(Tensor::vector({0.0, 0.0}));
    statnet::BoundNetwork net(g, spec, params, p_node, d);
    EXPECT_THROW(loss(g, net, p_node, 1.0, 1.0, 1.0, batch), DegenerateWeightsError);
}

TEST(Classify, Examples) {
    EXPECT_EQ(classify_selection({2, 7}, {2, 7}), SelectionClass::Exact);
    EXPECT_EQ(classify_selection({7, 2}, {2, 7}), SelectionClass::Exact);
    EXPECT_EQ(classify_selection({2}, {2, 7}), SelectionClass::NonExactTypeI);
    EXPECT_EQ(classify_selection({2, 3, 9}, {2, 7}), SelectionClass::NonExactTypeI);
    EXPECT_EQ(classify_selection({}, {2, 7}), SelectionClass::NonExactTypeI);
    EXPECT_EQ(classify_selection({2, 7, 11}, {2, 7}), SelectionClass::NonExactTypeII);
    EXPECT_EQ(to_string(SelectionClass::NonExactTypeII), "NonExactTypeII");
}

TEST(Threshold, SupportShrinksAsEpsilonGrows) {
    Philox rng(2, 0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> p(20);
        for (double& v : p) {
            v = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 0.0));
        }
        double eps = 0.0;
        auto prev = threshold_support(p, eps);
        EXPECT_EQ(prev.size(), 20u);
        for (int k = 0; k < 10; ++k) {
            eps = std::pow(10.0, -9.0 + k);
            const auto cur = threshold_support(p, eps);
            EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
            for (std::size_t i : cur) {
                EXPECT_GT(std::abs(p[i]), eps);
            }
            prev = cur;
        }
    }
    EXPECT_EQ(threshold_support({1e-5, -2e-5, 0.0}, 1e-5), (std::vector<std::size_t>{1}));
}

TEST(Config, Validation) {
    EXPECT_NO_THROW(TrainConfig{}.validate());
    auto bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](TrainConfig& c) { c.learning_rate = 0.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.c1 = -1.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.c2 = std::nan(""); }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.drift_target = 0.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.threshold = -1e-6; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.batch_size = 1; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.holdout_fraction = 1.0; }).validate(), ConfigError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.weight_learning_rate = -1.0; }).validate(), ConfigError);
}

TEST(Training, TooFewRowsForTheBatch) {
    const Dataset d = copy_target(300, 1);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 8, 1);
    EXPECT_THROW(select_features(d, spec, quick_config(0)), ContractError);
}

TEST(Training, IndependentTargetEstimatesNearZero) {
    Dataset d = testing_support::random_dataset({4, 4}, 1, 4000, 4, 11);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 16, 1);
    TrainConfig c = quick_config(3);
    const Stage1Result s1 = stage1_train(d, spec, c);
    EXPECT_NEAR(s1.heldout_mi, 0.0, 0.05);
    EXPECT_NEAR(heldout_mi(d, spec, s1.params, {1.0, 1.0, 1.0}, c), s1.heldout_mi, 1e-12);
}

TEST(Training, CopiedFeatureIsTheOnlySelection) {
    const Dataset d = copy_target(4000, 12);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 16, 1);
    const SelectionResult r = select_features(d, spec, quick_config(4));
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{1}));
    // I(X_1; Y) = log 4 for a copy of a uniform 4-level variable; the DV bound sits below it.
    EXPECT_GT(r.stage1_mi, 1.0);
    EXPECT_LT(r.stage1_mi, std::log(4.0) + 0.05);
    ASSERT_FALSE(r.mi_trace.empty());
    EXPECT_EQ(r.mi_trace.front().stage, 1);
    EXPECT_EQ(r.mi_trace.back().stage, 2);
    EXPECT_EQ(r.mi_trace.back().step, r.stage1_steps + r.stage2_steps);
    for (std::size_t i = 0; i < r.final_p.size(); ++i) {
        EXPECT_EQ(r.final_p[i] != 0.0, i == 1);
    }
}

TEST(Training, NoPenaltyKeepsEveryFeature) {
    const Dataset d = copy_target(2000, 13);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 8, 1);
    TrainConfig c = quick_config(5);
    c.c1 = 0.0;
    c.c2 = 0.0;
    c.stage1_max_steps = 200;
    c.stage2_max_steps = 300;
    const SelectionResult r = select_features(d, spec, c);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Training, SameSeedSameResult) {
    const Dataset d = copy_target(2000, 14);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 8, 1);
    TrainConfig c = quick_config(6);
    c.stage1_max_steps = 150;
    c.stage2_max_steps = 250;
    const SelectionResult a = select_features(d, spec, c);
    const SelectionResult b = select_features(d, spec, c);
    EXPECT_EQ(a.final_p, b.final_p);
    EXPECT_EQ(a.selected, b.selected);
    ASSERT_EQ(a.mi_trace.size(), b.mi_trace.size());
    for (std::size_t i = 0; i < a.mi_trace.size(); ++i) {
        EXPECT_EQ(a.mi_trace[i].mi_nats, b.mi_trace[i].mi_nats);
    }
    c.seed = 7;
    EXPECT_NE(select_features(d, spec, c).final_p, a.final_p);
}

TEST(Training, PlainGradientUpdateRuns) {
    const Dataset d = copy_target(2000, 15);
    const NetworkSpec spec = NetworkSpec::for_dataset(d, 8, 1);
    TrainConfig c = quick_config(8);
    c.optimizer = OptimizerKind::Sgd;
    c.weight_update = WeightUpdate::Gradient;
    c.learning_rate = 1e-2;
    c.stage1_max_steps = 100;
    c.stage2_max_steps = 100;
    const SelectionResult r = select_features(d, spec, c);
    EXPECT_EQ(r.final_p.size(), 3u);
    EXPECT_EQ(r.stage2_steps, 100u);
}

TEST(Clip, RescalesToTheGlobalNorm) {
    std::vector<Tensor> g{Tensor::vector({3.0, 0.0}), Tensor::vector({4.0})};
    const double f = detail::clip_global_norm(g, 1.0);
    EXPECT_NEAR(f, 0.2, 1e-15);
    EXPECT_NEAR(g[0][0], 0.6, 1e-15);
    EXPECT_NEAR(g[1][0], 0.8, 1e-15);
    std::vector<Tensor> small{Tensor::vector({0.1})};
    EXPECT_EQ(detail::clip_global_norm(small, 1.0), 1.0);
    EXPECT_EQ(small[0][0], 0.1);
}
