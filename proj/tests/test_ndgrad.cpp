#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "minerva/errors.hpp"
#include "minerva/ndgrad.hpp"
#include "gradient_cases.hpp"
#include "support.hpp"

using namespace minerva::ndgrad;
using testing_support::LossBuilder;
using testing_support::max_grad_error;
using testing_support::random_away_from_zero;
using testing_support::random_tensor;

namespace {

constexpr int kCases = 100;
constexpr double kTol = 1e-4;

} // namespace

TEST(NdgradForward, IdentityMatmul) {
    Graph g;
    const NodeId a = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
    const NodeId b = g.constant(Tensor::matrix({{3}, {4}}));
    EXPECT_EQ(g.value(g.matmul(a, b)), Tensor::matrix({{3}, {4}}));
}

TEST(NdgradForward, L2NormOfThreeFour) {
    Graph g;
    EXPECT_DOUBLE_EQ(g.value(g.l2_norm(g.constant(Tensor::vector({3, 4})))).item(), 5.0);
}

TEST(NdgradForward, MeanOfExpOfZerosIsOne) {
    Graph g;
    EXPECT_DOUBLE_EQ(g.value(g.mean(g.exp(g.constant(Tensor::vector({0, 0, 0, 0}))))).item(), 1.0);
}

TEST(NdgradForward, LogMeanExpIsShiftStable) {
    Graph g;
    const NodeId big = g.constant(Tensor::vector({1000.0, 1000.0 + std::log(3.0)}));
    EXPECT_NEAR(g.value(g.log_mean_exp(big)).item(), 1000.0 + std::log(2.0), 1e-12);
    const NodeId small = g.constant(Tensor::vector({-1000.0, -1000.0}));
    EXPECT_NEAR(g.value(g.log_mean_exp(small)).item(), -1000.0, 1e-12);
}

TEST(NdgradForward, ConcatAndGather) {
    Graph g;
    const NodeId a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    const NodeId b = g.constant(Tensor::matrix({{5}, {6}}));
    EXPECT_EQ(g.value(g.concat({a, b})), Tensor::matrix({{1, 2, 5}, {3, 4, 6}}));
    EXPECT_EQ(g.value(g.gather_rows(a, {1, 1, 0})), Tensor::matrix({{3, 4}, {3, 4}, {1, 2}}));
}

TEST(NdgradForward, RowAndScalarBroadcast) {
    Graph g;
    const NodeId a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    EXPECT_EQ(g.value(g.add(a, g.constant(Tensor::matrix({{10, 20}})))), Tensor::matrix({{11, 22}, {13, 24}}));
    EXPECT_EQ(g.value(g.mul(a, g.constant(Tensor::scalar(2)))), Tensor::matrix({{2, 4}, {6, 8}}));
}

TEST(NdgradErrors, ShapeMismatchNamesBothShapes) {
    Graph g;
    const NodeId a = g.constant(Tensor(Shape{2, 3}));
    const NodeId b = g.constant(Tensor(Shape{2, 3}));
    try {
        g.matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const minerva::DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    }
    const NodeId c = g.constant(Tensor(Shape{3, 2}));
    EXPECT_THROW(g.add(a, c), minerva::DimensionError);
    EXPECT_THROW(g.concat({a, c}), minerva::DimensionError);
    EXPECT_THROW(g.gather_rows(a, {5}), minerva::DimensionError);
}

TEST(NdgradErrors, BackwardNeedsScalarLoss) {
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({1, 2}));
    EXPECT_THROW(g.backward(g.tanh(x)), minerva::ContractError);
}

TEST(NdgradErrors, LogOfNonPositive) {
    Graph g;
    EXPECT_THROW(g.log(g.constant(Tensor::vector({1.0, 0.0}))), minerva::NumericError);
}

TEST(NdgradErrors, FiniteChecksCatchOverflow) {
    Graph g(true);
    EXPECT_THROW(g.exp(g.constant(Tensor::vector({1000.0}))), minerva::NumericError);
}

TEST(NdgradErrors, ConstantsHaveNoGradient) {
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({1, 2}));
    const NodeId c = g.constant(Tensor::vector({3, 4}));
    g.backward(g.sum(g.mul(x, c)));
    EXPECT_THROW((void)g.grad(c), minerva::ContractError);
    EXPECT_EQ(g.grad(x), Tensor::vector({3, 4}));
}

TEST(NdgradBackward, SumOfSquares) {
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({1, 2}));
    g.backward(g.sum(g.mul(x, x)));
    EXPECT_EQ(g.grad(x), Tensor::vector({2, 4}));
}

TEST(NdgradBackward, LogOfNorm) {
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({3, 4}));
    g.backward(g.log(g.l2_norm(x)));
    EXPECT_NEAR(g.grad(x)[0], 3.0 / 25.0, 1e-15);
    EXPECT_NEAR(g.grad(x)[1], 4.0 / 25.0, 1e-15);
    const double fd = testing_support::max_grad_error(
        {Tensor::vector({3, 4})}, [](Graph& h, const std::vector<NodeId>& in) { return h.log(h.l2_norm(in[0])); });
    EXPECT_LT(fd, 1e-6);
}

TEST(NdgradBackward, MeanOfTanhAtZero) {
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({0, 0}));
    g.backward(g.mean(g.tanh(x)));
    EXPECT_EQ(g.grad(x), Tensor::vector({0.5, 0.5}));
}

TEST(NdgradBackward, SharedParameterAccumulates) {
    // Two uses of the same parameter on one tape add their contributions.
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({1, 2}));
    const NodeId first = g.sum(g.scale(x, 3.0));
    const NodeId second = g.sum(g.mul(x, x));
    g.backward(g.add(first, second));
    EXPECT_EQ(g.grad(x), Tensor::vector({3 + 2, 3 + 4}));
}

TEST(NdgradBackward, UnusedParameterGetsExactZero) {
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({1, 2}));
    const NodeId unused = g.parameter(Tensor::vector({5, 6, 7}));
    g.backward(g.sum(x));
    EXPECT_EQ(g.grad(unused), Tensor::vector({0, 0, 0}));
}

TEST(NdgradBackward, RepeatedBackwardDoesNotAccumulateAcrossCalls) {
    Graph g;
    const NodeId x = g.parameter(Tensor::vector({1, 2}));
    const NodeId loss = g.sum(g.mul(x, x));
    g.backward(loss);
    g.backward(loss);
    EXPECT_EQ(g.grad(x), Tensor::vector({2, 4}));
}

// ---- finite-difference checks, one per primitive ---------------------------------
//
// Each case sweeps kCases seeds; shapes and values are drawn from the seed.

class PrimitiveGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
    const auto c = testing_support::primitive_cases()[GetParam()];
    for (int seed = 0; seed < kCases; ++seed) {
        minerva::Philox rng(static_cast<std::uint64_t>(seed), GetParam() + 1);
        EXPECT_LT(c.run(rng, static_cast<std::uint64_t>(seed)), kTol) << c.name << " seed " << seed;
    }
}

INSTANTIATE_TEST_SUITE_P(All, PrimitiveGradient,
                         ::testing::Range<std::size_t>(0, testing_support::primitive_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                             return testing_support::primitive_cases()[info.param].name;
                         });

TEST(NetworkGradient, FullLossMatchesCentralDifferences) {
    for (int seed = 0; seed < 20; ++seed) {
        minerva::Philox rng(static_cast<std::uint64_t>(seed), 100);
        EXPECT_LT(testing_support::network_loss_case(rng, static_cast<std::uint64_t>(seed)), kTol) << "seed " << seed;
    }
}
