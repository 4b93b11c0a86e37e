#pragma once

// Shared helpers for the test suites: central finite differences and small
// dataset fixtures.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "minerva/dataset.hpp"
#include "minerva/ndgrad.hpp"
#include "minerva/rng.hpp"

namespace testing_support {

using minerva::ndgrad::Graph;
using minerva::ndgrad::NodeId;
using minerva::ndgrad::Shape;
using minerva::ndgrad::Tensor;

/// Builds the loss on a fresh tape from parameter nodes holding `inputs`.
using LossBuilder = std::function<NodeId(Graph&, const std::vector<NodeId>&)>;

inline double eval_loss(const std::vector<Tensor>& inputs, const LossBuilder& build) {
    Graph g(false);
    std::vector<NodeId> ids;
    for (const auto& t : inputs) {
        ids.push_back(g.constant(t));
    }
    return g.value(build(g, ids)).item();
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps components that are zero
/// up to rounding from dominating.
inline double rel_error(double analytic, double numeric, double floor = 1e-4) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Largest relative error between backward() and central differences over every input entry.
inline double max_grad_error(const std::vector<Tensor>& inputs, const LossBuilder& build, double h = 1e-5) {
    Graph g(false);
    std::vector<NodeId> ids;
    for (const auto& t : inputs) {
        ids.push_back(g.parameter(t));
    }
    const NodeId loss = build(g, ids);
    g.backward(loss);
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor analytic = g.grad(ids[k]);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            auto plus = inputs;
            auto minus = inputs;
            plus[k][i] += h;
            minus[k][i] -= h;
            const double numeric = (eval_loss(plus, build) - eval_loss(minus, build)) / (2.0 * h);
            worst = std::max(worst, rel_error(analytic[i], numeric));
        }
    }
    return worst;
}

inline Tensor random_tensor(Shape shape, minerva::Philox& rng, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

/// Entries bounded away from zero, for ops with a kink there.
inline Tensor random_away_from_zero(Shape shape, minerva::Philox& rng, double gap = 1e-2) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        do {
            v = rng.uniform(-2.0, 2.0);
        } while (std::abs(v) < gap);
    }
    return t;
}

/// Dataset with the given categorical cardinalities, `n_float` float features
/// and a float or categorical target, filled from `seed`.
inline minerva::Dataset random_dataset(const std::vector<std::size_t>& cards, std::size_t n_float, std::size_t rows,
                                       std::size_t target_card, std::uint64_t seed) {
    minerva::Philox rng(seed, 99);
    minerva::Dataset d;
    std::size_t j = 0;
    for (std::size_t c : cards) {
        std::vector<std::int32_t> codes(rows);
        for (auto& v : codes) {
            v = static_cast<std::int32_t>(rng.index(c));
        }
        d.features.push_back(minerva::Column::categorical("c" + std::to_string(j++), c, std::move(codes)));
    }
    for (std::size_t f = 0; f < n_float; ++f) {
        std::vector<double> vals(rows);
        for (auto& v : vals) {
            v = rng.uniform(-1.0, 1.0);
        }
        d.features.push_back(minerva::Column::floating("f" + std::to_string(f), std::move(vals)));
    }
    if (target_card > 0) {
        std::vector<std::int32_t> codes(rows);
        for (auto& v : codes) {
            v = static_cast<std::int32_t>(rng.index(target_card));
        }
        d.target = minerva::Column::categorical("y", target_card, std::move(codes));
    } else {
        std::vector<double> vals(rows);
        for (auto& v : vals) {
            v = rng.normal();
        }
        d.target = minerva::Column::floating("y", std::move(vals));
    }
    return d;
}

} // namespace testing_support
