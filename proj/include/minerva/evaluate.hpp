#pragma once

// Downstream check for a selected feature set: a k-NN regressor fitted on a
// seeded 80/20 split, scored by R^2 on both parts.
//
// Distance between rows is Euclidean over the selected columns, where float
// columns are min-max scaled on the training part and categorical columns
// contribute 1 when the codes differ.

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/mine.hpp"
#include "minerva/rng.hpp"

namespace minerva::evaluate {

struct KnnConfig {
    std::size_t k = 10;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct Metrics {
    double r2_in_sample = 0.0;
    double r2_out_of_sample = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    std::vector<std::string> warnings;
};

/// 1 - SS_res / SS_tot, defined as 0 when the observed values have no variance.
inline double r_squared(std::span<const double> observed, std::span<const double> predicted) {
    if (observed.size() != predicted.size()) {
        throw DimensionError("r_squared: " + std::to_string(observed.size()) + " observations, " +
                             std::to_string(predicted.size()) + " predictions");
    }
    if (observed.empty()) {
        return 0.0;
    }
    double mean = 0.0;
    for (double v : observed) {
        mean += v;
    }
    mean /= static_cast<double>(observed.size());
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        ss_tot += (observed[i] - mean) * (observed[i] - mean);
        ss_res += (observed[i] - predicted[i]) * (observed[i] - predicted[i]);
    }
    if (ss_tot == 0.0) {
        return 0.0;
    }
    return 1.0 - ss_res / ss_tot;
}

/// Inverse-distance-weighted k-NN regressor over a fixed set of columns.
class KnnRegressor {
public:
    KnnRegressor(const Dataset& data, std::vector<std::size_t> features, std::vector<std::size_t> train_rows,
                 std::size_t k)
        : data_(data), features_(std::move(features)), train_(std::move(train_rows)), k_(k) {
        if (k_ < 1) {
            throw ConfigError("knn: k must be at least 1");
        }
        if (train_.empty()) {
            throw ContractError("knn: no training rows");
        }
        for (std::size_t f : features_) {
            if (f >= data_.features.size()) {
                throw DimensionError("knn: feature index " + std::to_string(f + 1) + " out of range 1.." +
                                     std::to_string(data_.features.size()));
            }
        }
        for (std::size_t f : features_) {
            const Column& col = data_.features[f];
            if (col.kind == ColumnKind::Categorical) {
                scale_.push_back(0.0);
                continue;
            }
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (std::size_t r : train_) {
                lo = std::min(lo, col.values[r]);
                hi = std::max(hi, col.values[r]);
            }
            scale_.push_back(hi > lo ? 1.0 / (hi - lo) : 0.0);
        }
        y_.reserve(train_.size());
        for (std::size_t r : train_) {
            y_.push_back(data_.target.numeric(r));
        }
    }

    double distance(std::size_t a, std::size_t b) const {
        double sq = 0.0;
        for (std::size_t c = 0; c < features_.size(); ++c) {
            const Column& col = data_.features[features_[c]];
            if (col.kind == ColumnKind::Categorical) {
                sq += col.codes[a] != col.codes[b] ? 1.0 : 0.0;
            } else {
                const double dx = (col.values[a] - col.values[b]) * scale_[c];
                sq += dx * dx;
            }
        }
        return std::sqrt(sq);
    }

    /// Prediction for a dataset row. Neighbours at distance 0 take all the weight.
    double predict(std::size_t row) const {
        const std::size_t k = std::min(k_, train_.size());
        std::vector<std::pair<double, std::size_t>> dist(train_.size());
        for (std::size_t i = 0; i < train_.size(); ++i) {
            dist[i] = {distance(row, train_[i]), i};
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
        double exact_sum = 0.0;
        std::size_t exact_n = 0;
        double wsum = 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const auto [d, idx] = dist[i];
            if (d == 0.0) {
                exact_sum += y_[idx];
                ++exact_n;
            } else {
                wsum += 1.0 / d;
                acc += y_[idx] / d;
            }
        }
        if (exact_n > 0) {
            return exact_sum / static_cast<double>(exact_n);
        }
        return acc / wsum;
    }

private:
    const Dataset& data_;
    std::vector<std::size_t> features_;
    std::vector<std::size_t> train_;
    std::size_t k_;
    std::vector<double> scale_;
    std::vector<double> y_;
};

/// Seeded split of {0..n-1} into (train, test).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(std::size_t n, double train_fraction,
                                                                                std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    if (n < 2) {
        throw ContractError("split_rows: need at least 2 rows");
    }
    Philox rng(seed, streams::kEvaluateSplit);
    std::vector<std::size_t> perm = mine::sample_permutation(n, rng);
    auto n_train = static_cast<std::size_t>(std::round(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return {std::move(train), std::move(test)};
}

/// In-sample and out-of-sample R^2 of the k-NN regressor on `selected` (0-based).
inline Metrics evaluate_selection(const Dataset& data, const std::vector<std::size_t>& selected,
                                  const KnnConfig& config) {
    data.validate();
    Metrics out;
    auto [train, test] = split_rows(data.rows(), config.train_fraction, config.seed);
    out.n_train = train.size();
    out.n_test = test.size();
    if (selected.empty()) {
        out.warnings.push_back("empty selection; R^2 reported as 0");
        std::cerr << "warning: " << out.warnings.back() << "\n";
        return out;
    }
    const KnnRegressor model(data, selected, train, config.k);
    auto score = [&](const std::vector<std::size_t>& rows) {
        std::vector<double> obs;
        std::vector<double> pred;
        obs.reserve(rows.size());
        pred.reserve(rows.size());
        for (std::size_t r : rows) {
            obs.push_back(data.target.numeric(r));
            pred.push_back(model.predict(r));
        }
        return r_squared(obs, pred);
    };
    out.r2_in_sample = score(train);
    out.r2_out_of_sample = score(test);
    return out;
}

} // namespace minerva::evaluate
