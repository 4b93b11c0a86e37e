#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "minerva/errors.hpp"
#include "minerva/ksg.hpp"
#include "minerva/rng.hpp"

using namespace minerva;
using namespace minerva::ksg;

namespace {

// O(n^2) reference: full distance scan per point.
double ksg_reference(const std::vector<double>& x, const std::vector<double>& y, std::size_t k) {
    const std::size_t n = x.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> d;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                d.push_back(std::max(std::abs(x[i] - x[j]), std::abs(y[i] - y[j])));
            }
        }
        std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k - 1), d.end());
        const double eps = d[k - 1];
        std::size_t nx = 0;
        std::size_t ny = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                nx += std::abs(x[i] - x[j]) < eps;
                ny += std::abs(y[i] - y[j]) < eps;
            }
        }
        acc += boost::math::digamma(static_cast<double>(nx + 1)) + boost::math::digamma(static_cast<double>(ny + 1));
    }
    return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) -
           acc / static_cast<double>(n);
}

struct Pair {
    std::vector<double> x, y;
};

Pair gaussian(std::size_t n, double rho, std::uint64_t seed) {
    Philox rng(seed, 0);
    Pair p;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = rng.normal();
        const double b = rng.normal();
        p.x.push_back(a);
        p.y.push_back(rho * a + std::sqrt(1.0 - rho * rho) * b);
    }
    return p;
}

} // namespace

TEST(Ksg, MatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Philox rng(seed, 1);
        const std::size_t n = 50 + rng.index(150);
        const std::size_t k = 1 + rng.index(8);
        const Pair p = gaussian(n, rng.uniform(-0.9, 0.9), seed);
        EXPECT_NEAR(ksg_mi(p.x, p.y, k), ksg_reference(p.x, p.y, k), 1e-12) << "seed " << seed;
    }
}

TEST(Ksg, IndependentPairIsNearZero) {
    Philox rng(2, 0);
    std::vector<double> x(2000);
    std::vector<double> y(2000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform();
        y[i] = rng.uniform();
    }
    EXPECT_NEAR(ksg_mi(x, y, 5), 0.0, 0.05);
}

TEST(Ksg, GaussianMatchesClosedForm) {
    const Pair p = gaussian(3000, 0.9, 3);
    EXPECT_NEAR(ksg_mi(p.x, p.y, 5), -0.5 * std::log(1.0 - 0.81), 0.05);
}

TEST(Ksg, GrowsWithCorrelation) {
    double prev = -1.0;
    for (double rho : {0.0, 0.3, 0.6, 0.85, 0.97}) {
        const Pair p = gaussian(2000, rho, 4);
        const double mi = ksg_mi(p.x, p.y, 5);
        EXPECT_GT(mi, prev) << "rho " << rho;
        prev = mi;
    }
}

TEST(Ksg, SymmetricInItsArguments) {
    const Pair p = gaussian(500, 0.5, 5);
    EXPECT_NEAR(ksg_mi(p.x, p.y, 4), ksg_mi(p.y, p.x, 4), 1e-12);
}

TEST(Ksg, ShufflingDestroysDependence) {
    Pair p = gaussian(2000, 0.95, 6);
    Philox rng(7, 0);
    for (std::size_t i = p.y.size() - 1; i > 0; --i) {
        std::swap(p.y[i], p.y[rng.index(i + 1)]);
    }
    EXPECT_NEAR(ksg_mi(p.x, p.y, 5), 0.0, 0.05);
}

TEST(Ksg, ThresholdedTargetIsDetected) {
    Philox rng(8, 0);
    std::vector<double> x(2000);
    std::vector<double> y(2000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = rng.uniform(0.0, 4.0);
        y[i] = x[i] > 2.0 ? 1.0 : 0.0;
    }
    Philox jit(9, 0);
    EXPECT_GT(ksg_mi(x, jitter(y, 1e-10, jit), 5), 0.3);
}

TEST(Ksg, ConstantColumnGivesZero) {
    const std::vector<double> c(100, 3.0);
    const Pair p = gaussian(100, 0.5, 10);
    EXPECT_EQ(ksg_mi(c, p.y, 5), 0.0);
    EXPECT_EQ(ksg_mi(p.x, c, 5), 0.0);
}

TEST(Ksg, ArgumentErrors) {
    const Pair p = gaussian(10, 0.5, 11);
    EXPECT_THROW(ksg_mi(p.x, std::vector<double>(9, 0.0), 3), DimensionError);
    EXPECT_THROW(ksg_mi(p.x, p.y, 10), ContractError);
    EXPECT_THROW(ksg_mi(p.x, p.y, 0), ContractError);
}

TEST(Jitter, BoundedByScaleTimesRange) {
    Philox rng(12, 0);
    const std::vector<double> col{0.0, 1.0, 1.0, 2.0, 2.0};
    const auto j = jitter(col, 1e-3, rng);
    for (std::size_t i = 0; i < col.size(); ++i) {
        EXPECT_GE(j[i], col[i]);
        EXPECT_LT(j[i], col[i] + 2e-3);
    }
    EXPECT_NE(j[1], j[2]);
    EXPECT_EQ(jitter(std::vector<double>(4, 7.0), 1e-3, rng), std::vector<double>(4, 7.0));
}

TEST(Filter, Examples) {
    EXPECT_EQ(filter_scores({0.01, 0.03, 0.02, 0.5}, 0.02), (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(filter_scores({0.01, 0.03}, std::numeric_limits<double>::infinity()), std::vector<std::size_t>{});
    EXPECT_EQ(filter_scores({}, 0.0), std::vector<std::size_t>{});
}

TEST(Filter, DatasetPipeline) {
    Philox rng(13, 0);
    const std::size_t n = 1500;
    std::vector<double> a(n);
    std::vector<double> b(n);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal();
        y[i] = a[i] + 0.3 * rng.normal();
    }
    Dataset d;
    d.features = {Column::floating("a", a), Column::floating("b", b)};
    d.target = Column::floating("y", y);
    KsgConfig cfg;
    cfg.seed = 1;
    EXPECT_EQ(ksg_filter(d, cfg), (std::vector<std::size_t>{0}));
    const auto scores = ksg_scores(d, cfg);
    EXPECT_EQ(scores, ksg_scores(d, cfg));
    cfg.threshold = std::numeric_limits<double>::infinity();
    EXPECT_TRUE(ksg_filter(d, cfg).empty());
    cfg.threshold = -1.0;
    EXPECT_THROW(ksg_scores(d, cfg), ConfigError);
    cfg.threshold = 0.02;
    cfg.k = n;
    EXPECT_THROW(ksg_scores(d, cfg), ConfigError);
}
