#pragma once

// Kraskov-Stoegbauer-Grassberger estimator (first variant) and the pairwise
// threshold filter built on it.
//
//   I = psi(k) + psi(N) - < psi(n_x + 1) + psi(n_y + 1) >
//
// eps_i is the max-norm distance from point i to its k-th nearest neighbour in
// the joint (x, y) space; n_x / n_y count other points strictly closer than
// eps_i in each marginal. The joint search is exact: points are swept in x
// order and the sweep stops once |dx| exceeds the current k-th distance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/rng.hpp"

namespace minerva::ksg {

struct KsgConfig {
    std::size_t k = 5;
    double threshold = 0.02;      ///< nats
    double jitter_scale = 1e-10;  ///< relative to each column's range
    std::uint64_t seed = 0;
};

namespace detail {

inline bool is_constant(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Count of sorted values v with |v - c| < r, including c itself. The binary
// searches only bracket the range; the edges are settled with the same
// subtraction the definition uses, so a neighbour at exactly distance r is
// never counted through rounding in c +- r.
inline std::size_t count_open(const std::vector<double>& sorted, double c, double r) {
    auto inside = [&](double v) { return std::abs(v - c) < r; };
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), c - r);
    while (lo != sorted.begin() && inside(*(lo - 1))) {
        --lo;
    }
    while (lo != sorted.end() && *lo < c && !inside(*lo)) {
        ++lo;
    }
    auto hi = std::upper_bound(sorted.begin(), sorted.end(), c + r);
    while (hi != sorted.end() && inside(*hi)) {
        ++hi;
    }
    while (hi != lo && *(hi - 1) > c && !inside(*(hi - 1))) {
        --hi;
    }
    return static_cast<std::size_t>(hi - lo);
}

} // namespace detail

/// KSG mutual information estimate in nats. Inputs must be free of exact ties
/// (see `jitter`); a constant column yields 0 with a warning on stderr.
inline double ksg_mi(std::span<const double> x, std::span<const double> y, std::size_t k = 5) {
    const std::size_t n = x.size();
    if (y.size() != n) {
        throw DimensionError("ksg_mi: columns have " + std::to_string(n) + " and " + std::to_string(y.size()) +
                             " samples");
    }
    if (k < 1 || n <= k) {
        throw ContractError("ksg_mi: need 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    if (detail::is_constant(x) || detail::is_constant(y)) {
        std::cerr << "warning: ksg_mi: constant column, returning 0\n";
        return 0.0;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> xs(n);
    std::vector<double> ys(y.begin(), y.end());
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = x[order[i]];
    }
    std::sort(ys.begin(), ys.end());

    double acc = 0.0;
    std::priority_queue<double> best; // max-heap of the k smallest distances so far
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t i = order[s];
        best = {};
        auto kth = [&]() { return best.size() < k ? std::numeric_limits<double>::infinity() : best.top(); };
        auto offer = [&](std::size_t t) {
            const std::size_t j = order[t];
            const double d = std::max(std::abs(x[j] - x[i]), std::abs(y[j] - y[i]));
            if (best.size() < k) {
                best.push(d);
            } else if (d < best.top()) {
                best.pop();
                best.push(d);
            }
        };
        std::size_t left = s;
        std::size_t right = s + 1;
        while (true) {
            const double dl = left > 0 ? x[i] - xs[left - 1] : std::numeric_limits<double>::infinity();
            const double dr = right < n ? xs[right] - x[i] : std::numeric_limits<double>::infinity();
            const double r = kth();
            if (std::min(dl, dr) > r || (left == 0 && right == n)) {
                break;
            }
            if (dl <= dr) {
                offer(--left);
            } else {
                offer(right++);
            }
        }
        const double eps = kth();
        // Exact ties leave eps = 0 and an empty ball; count such a point as having no neighbours.
        const std::size_t nx = std::max<std::size_t>(detail::count_open(xs, x[i], eps), 1) - 1;
        const std::size_t ny = std::max<std::size_t>(detail::count_open(ys, y[i], eps), 1) - 1;
        acc += boost::math::digamma(static_cast<double>(nx + 1)) + boost::math::digamma(static_cast<double>(ny + 1));
    }
    return boost::math::digamma(static_cast<double>(k)) + boost::math::digamma(static_cast<double>(n)) -
           acc / static_cast<double>(n);
}

/// Adds uniform noise of width `scale * range(column)` to break distance ties.
inline std::vector<double> jitter(std::span<const double> column, double scale, Philox& rng) {
    std::vector<double> out(column.begin(), column.end());
    if (out.empty()) {
        return out;
    }
    const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
    const double width = scale * (*hi - *lo);
    for (double& v : out) {
        v += width * rng.uniform();
    }
    return out;
}

/// Per-feature KSG scores I(X_i; Y) on jittered columns (categorical codes are jittered too).
inline std::vector<double> ksg_scores(const Dataset& data, const KsgConfig& config) {
    if (config.k < 1 || config.k >= data.rows()) {
        throw ConfigError("ksg: k must satisfy 1 <= k < n");
    }
    if (!(config.threshold >= 0.0)) {
        throw ConfigError("ksg: threshold must be non-negative");
    }
    Philox rng(config.seed, streams::kKsgJitter);
    const auto y = jitter(data.target.as_numeric(), config.jitter_scale, rng);
    std::vector<double> scores;
    for (const auto& col : data.features) {
        const auto x = jitter(col.as_numeric(), config.jitter_scale, rng);
        scores.push_back(ksg_mi(x, y, config.k));
    }
    return scores;
}

/// {i : I(X_i; Y) > threshold}, ascending.
inline std::vector<std::size_t> filter_scores(const std::vector<double>& scores, double threshold) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] > threshold) {
            out.push_back(i);
        }
    }
    return out;
}

inline std::vector<std::size_t> ksg_filter(const Dataset& data, const KsgConfig& config) {
    return filter_scores(ksg_scores(data, config), config.threshold);
}

} // namespace minerva::ksg
