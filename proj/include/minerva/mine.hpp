#pragma once

// Empirical Donsker-Varadhan terms.
//
//   mu     = (1/n) sum_i f(p ⊙ x_i, y_i)
//   log_nu = log (1/n) sum_i exp(f(p ⊙ x_sigma(i), y_i))
//   v      = -mu + log_nu            (MI estimate is -v, in nats)
//
// A critic is any callable `NodeId(span<const size_t> x_rows, span<const size_t> y_rows)`
// returning an (n, 1) node of scores on the caller's tape.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "minerva/errors.hpp"
#include "minerva/ndgrad.hpp"
#include "minerva/rng.hpp"

namespace minerva::mine {

using ndgrad::Graph;
using ndgrad::NodeId;

template <class F>
concept Critic = requires(F f, std::span<const std::size_t> rows) {
    { f(rows, rows) } -> std::convertible_to<NodeId>;
};

/// Rows drawn from the joint sample plus the shuffle used for the product-of-marginals term.
struct Batch {
    std::vector<std::size_t> rows;  ///< dataset row of the i-th sample
    std::vector<std::size_t> sigma; ///< permutation of {0..n-1}

    std::size_t size() const noexcept { return rows.size(); }

    /// Throws ContractError unless sigma is a bijection on {0..n-1}.
    void validate() const {
        if (rows.empty()) {
            throw ContractError("batch is empty");
        }
        if (sigma.size() != rows.size()) {
            throw ContractError("batch permutation has " + std::to_string(sigma.size()) + " entries for " +
                                std::to_string(rows.size()) + " rows");
        }
        std::vector<bool> seen(sigma.size(), false);
        for (std::size_t s : sigma) {
            if (s >= sigma.size() || seen[s]) {
                throw ContractError("batch sigma is not a permutation");
            }
            seen[s] = true;
        }
    }

    /// Feature rows of the shuffled pairs: rows[sigma[i]].
    std::vector<std::size_t> shuffled_rows() const {
        std::vector<std::size_t> out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out[i] = rows[sigma[i]];
        }
        return out;
    }
};

struct MiEstimate {
    double value = 0.0; ///< v = -mu + log_nu
    double mu = 0.0;
    double log_nu = 0.0;
    std::size_t n = 0;

    /// Mutual information estimate in nats.
    double mi() const noexcept { return -value; }
};

/// Uniform permutation of {0..n-1} by Fisher-Yates.
inline std::vector<std::size_t> sample_permutation(std::size_t n, Philox& rng) {
    if (n < 2) {
        throw ContractError("sample_permutation: need n >= 2, got " + std::to_string(n));
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.index(i + 1));
        std::swap(perm[i], perm[j]);
    }
    return perm;
}

namespace detail {
inline void require_finite_scores(const Graph& g, NodeId scores, const char* term) {
    const auto& v = g.value(scores);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError(std::string(term) + ": non-finite critic score at batch row " + std::to_string(i));
        }
    }
}
} // namespace detail

/// Mean joint-pair score, as a scalar node.
template <Critic F>
NodeId mu_hat(Graph& g, F&& f, const Batch& batch) {
    if (batch.rows.empty()) {
        throw ContractError("mu_hat: empty batch");
    }
    const NodeId scores = f(std::span<const std::size_t>(batch.rows), std::span<const std::size_t>(batch.rows));
    detail::require_finite_scores(g, scores, "mu_hat");
    return g.mean(scores);
}

/// Max-shifted log-mean-exp of shuffled-pair scores, as a scalar node.
template <Critic F>
NodeId log_nu_hat(Graph& g, F&& f, const Batch& batch) {
    batch.validate();
    const std::vector<std::size_t> shuffled = batch.shuffled_rows();
    const NodeId scores = f(std::span<const std::size_t>(shuffled), std::span<const std::size_t>(batch.rows));
    detail::require_finite_scores(g, scores, "log_nu_hat");
    return g.log_mean_exp(scores);
}

struct Objective {
    NodeId value; ///< differentiable v node
    MiEstimate estimate;
};

/// v = -mu + log_nu on the given tape.
template <Critic F>
Objective v_objective(Graph& g, F&& f, const Batch& batch) {
    const NodeId mu = mu_hat(g, f, batch);
    const NodeId log_nu = log_nu_hat(g, f, batch);
    const NodeId v = g.sub(log_nu, mu);
    MiEstimate est;
    est.mu = g.value(mu).item();
    est.log_nu = g.value(log_nu).item();
    est.value = -est.mu + est.log_nu;
    est.n = batch.size();
    return {v, est};
}

} // namespace minerva::mine
