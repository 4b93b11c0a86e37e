#pragma once

// Seeded benchmark generators with known generating feature sets, and exact
// mutual-information oracles for the discrete case.
//
// Feature indices in this header are 0-based. Categorical values are drawn
// from {0..m-1} (written as {1..m} in CSV).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/rng.hpp"

namespace minerva::synth {

/// Y = 1{X_k0 == X_k1}, X_1..X_d iid uniform on m categories.
struct ExpASpec {
    std::size_t d = 30;
    std::size_t m = 5;
    std::size_t k0 = 2;
    std::size_t k1 = 7;
    std::size_t n = 50000;
    std::uint64_t seed = 0;

    void validate() const {
        if (m <= 2) {
            throw SpecError("experiment A: m must exceed 2 (got " + std::to_string(m) + ")");
        }
        if (d < 2) {
            throw SpecError("experiment A: d must be at least 2");
        }
        if (!(k0 < k1) || k1 >= d) {
            throw SpecError("experiment A: need 1 <= k0 < k1 <= d (got k0=" + std::to_string(k0 + 1) +
                            ", k1=" + std::to_string(k1 + 1) + ", d=" + std::to_string(d) + ")");
        }
        if (n < 1) {
            throw SpecError("experiment A: n must be positive");
        }
    }
};

/// Y = sum alpha_l sin(2 pi X_{j_l}) if X_k0 == X_k1, else sum beta_l cos(2 pi X_{i_l}).
/// Features 0..d1-1 are categorical on m values, d1..d1+d2-1 are uniform(0,1).
struct ExpBSpec {
    std::size_t d1 = 6;
    std::size_t d2 = 10;
    std::size_t m = 4;
    std::size_t k0 = 0;
    std::size_t k1 = 1;
    std::vector<std::size_t> j_indices{6, 7};
    std::vector<std::size_t> i_indices{8, 9};
    std::vector<double> alpha{1.0, 1.0};
    std::vector<double> beta{1.0, 1.0};
    std::size_t n = 20000;
    std::uint64_t seed = 0;

    /// Returns warnings (e.g. overlapping index lists); throws SpecError on invalid specs.
    std::vector<std::string> validate() const {
        if (m < 2) {
            throw SpecError("experiment B: m must be at least 2");
        }
        if (d1 < 2 || d2 < 1) {
            throw SpecError("experiment B: need d1 >= 2 and d2 >= 1");
        }
        if (!(k0 < k1) || k1 >= d1) {
            throw SpecError("experiment B: need 1 <= k0 < k1 <= d1");
        }
        if (alpha.size() != j_indices.size()) {
            throw SpecError("experiment B: " + std::to_string(alpha.size()) + " alpha coefficients for " +
                            std::to_string(j_indices.size()) + " sine indices");
        }
        if (beta.size() != i_indices.size()) {
            throw SpecError("experiment B: " + std::to_string(beta.size()) + " beta coefficients for " +
                            std::to_string(i_indices.size()) + " cosine indices");
        }
        auto check_range = [this](const std::vector<std::size_t>& idx, const char* name) {
            for (std::size_t i : idx) {
                if (i < d1 || i >= d1 + d2) {
                    throw SpecError(std::string("experiment B: ") + name + " index " + std::to_string(i + 1) +
                                    " is not a continuous feature (" + std::to_string(d1 + 1) + ".." +
                                    std::to_string(d1 + d2) + ")");
                }
            }
            if (std::set<std::size_t>(idx.begin(), idx.end()).size() != idx.size()) {
                throw SpecError(std::string("experiment B: repeated ") + name + " index");
            }
        };
        check_range(j_indices, "sine");
        check_range(i_indices, "cosine");
        if (n < 1) {
            throw SpecError("experiment B: n must be positive");
        }
        std::vector<std::string> warnings;
        for (std::size_t j : j_indices) {
            if (std::find(i_indices.begin(), i_indices.end(), j) != i_indices.end()) {
                warnings.push_back("experiment B: feature " + std::to_string(j + 1) +
                                   " appears in both the sine and cosine branches");
            }
        }
        return warnings;
    }
};

struct Generated {
    Dataset data;
    std::vector<std::size_t> truth; ///< sorted generating feature indices
    std::vector<std::string> warnings;
};

inline Generated gen_experiment_a(const ExpASpec& spec) {
    spec.validate();
    Philox rng(spec.seed, streams::kGenerator);
    std::vector<std::vector<std::int32_t>> cols(spec.d, std::vector<std::int32_t>(spec.n));
    std::vector<std::int32_t> y(spec.n);
    for (std::size_t r = 0; r < spec.n; ++r) {
        for (std::size_t j = 0; j < spec.d; ++j) {
            cols[j][r] = static_cast<std::int32_t>(rng.index(spec.m));
        }
        y[r] = cols[spec.k0][r] == cols[spec.k1][r] ? 1 : 0;
    }
    Generated out;
    for (std::size_t j = 0; j < spec.d; ++j) {
        out.data.features.push_back(Column::categorical("x" + std::to_string(j + 1), spec.m, std::move(cols[j])));
    }
    out.data.target = Column::categorical("y", 2, std::move(y));
    out.truth = {spec.k0, spec.k1};
    return out;
}

inline Generated gen_experiment_b(const ExpBSpec& spec) {
    Generated out;
    out.warnings = spec.validate();
    Philox rng(spec.seed, streams::kGenerator);
    std::vector<std::vector<std::int32_t>> cats(spec.d1, std::vector<std::int32_t>(spec.n));
    std::vector<std::vector<double>> conts(spec.d2, std::vector<double>(spec.n));
    std::vector<double> y(spec.n);
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    for (std::size_t r = 0; r < spec.n; ++r) {
        for (std::size_t j = 0; j < spec.d1; ++j) {
            cats[j][r] = static_cast<std::int32_t>(rng.index(spec.m));
        }
        for (std::size_t j = 0; j < spec.d2; ++j) {
            conts[j][r] = rng.uniform();
        }
        double v = 0.0;
        if (cats[spec.k0][r] == cats[spec.k1][r]) {
            for (std::size_t l = 0; l < spec.j_indices.size(); ++l) {
                v += spec.alpha[l] * std::sin(kTwoPi * conts[spec.j_indices[l] - spec.d1][r]);
            }
        } else {
            for (std::size_t l = 0; l < spec.i_indices.size(); ++l) {
                v += spec.beta[l] * std::cos(kTwoPi * conts[spec.i_indices[l] - spec.d1][r]);
            }
        }
        y[r] = v;
    }
    for (std::size_t j = 0; j < spec.d1; ++j) {
        out.data.features.push_back(Column::categorical("x" + std::to_string(j + 1), spec.m, std::move(cats[j])));
    }
    for (std::size_t j = 0; j < spec.d2; ++j) {
        out.data.features.push_back(Column::floating("x" + std::to_string(spec.d1 + j + 1), std::move(conts[j])));
    }
    out.data.target = Column::floating("y", std::move(y));
    std::set<std::size_t> truth{spec.k0, spec.k1};
    truth.insert(spec.j_indices.begin(), spec.j_indices.end());
    truth.insert(spec.i_indices.begin(), spec.i_indices.end());
    out.truth.assign(truth.begin(), truth.end());
    return out;
}

/// Closed-form I(X_k0, X_k1; Y) for the Experiment A target, in nats.
inline double lemma1_pair_mi(std::size_t m) {
    if (m <= 2) {
        throw ContractError("lemma1_pair_mi: m must exceed 2 (got " + std::to_string(m) + ")");
    }
    const double md = static_cast<double>(m);
    // log(m / (m - 1)) = -log1p(-1/m)
    return (md - 1.0) / md * -std::log1p(-1.0 / md) + std::log(md) / md;
}

/// Joint probability table P(x, y) over a finite product space, row-major (x major).
struct JointTable {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<double> p;

    double operator()(std::size_t x, std::size_t y) const { return p[x * ny + y]; }
};

/// Exact MI by direct summation of P log(P / (P_X P_Y)), skipping zero cells.
inline double brute_force_mi(const JointTable& joint) {
    if (joint.p.size() != joint.nx * joint.ny || joint.p.empty()) {
        throw ContractError("brute_force_mi: table size does not match its dimensions");
    }
    double total = 0.0;
    for (double v : joint.p) {
        if (!(v >= 0.0)) {
            throw ContractError("brute_force_mi: negative or NaN probability");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw ContractError("brute_force_mi: probabilities sum to " + std::to_string(total) + ", not 1");
    }
    std::vector<double> px(joint.nx, 0.0);
    std::vector<double> py(joint.ny, 0.0);
    for (std::size_t x = 0; x < joint.nx; ++x) {
        for (std::size_t y = 0; y < joint.ny; ++y) {
            px[x] += joint(x, y);
            py[y] += joint(x, y);
        }
    }
    double mi = 0.0;
    for (std::size_t x = 0; x < joint.nx; ++x) {
        for (std::size_t y = 0; y < joint.ny; ++y) {
            const double pxy = joint(x, y);
            if (pxy > 0.0) {
                mi += pxy * std::log(pxy / (px[x] * py[y]));
            }
        }
    }
    return mi;
}

/// Exact joint of ((X_k0, X_k1), Y) for Experiment A: m^2 x 2 table,
/// P(x1, x2, y) = c(x1, x2, y) / m^2 with c = 1{y = 1{x1 = x2}}.
inline JointTable experiment_a_pair_joint(std::size_t m) {
    JointTable t{m * m, 2, std::vector<double>(m * m * 2, 0.0)};
    const double w = 1.0 / static_cast<double>(m * m);
    for (std::size_t x1 = 0; x1 < m; ++x1) {
        for (std::size_t x2 = 0; x2 < m; ++x2) {
            t.p[(x1 * m + x2) * 2 + (x1 == x2 ? 1 : 0)] = w;
        }
    }
    return t;
}

/// Exact joint of (X_k0, Y) for Experiment A: m x 2 table obtained by marginalising X_k1.
inline JointTable experiment_a_single_joint(std::size_t m) {
    const JointTable pair = experiment_a_pair_joint(m);
    JointTable t{m, 2, std::vector<double>(m * 2, 0.0)};
    for (std::size_t x1 = 0; x1 < m; ++x1) {
        for (std::size_t x2 = 0; x2 < m; ++x2) {
            for (std::size_t y = 0; y < 2; ++y) {
                t.p[x1 * 2 + y] += pair(x1 * m + x2, y);
            }
        }
    }
    return t;
}

/// Conditional MI I(X; Y | Z) from a table over (z, x, y), by summing per-slice MI.
inline double brute_force_conditional_mi(const std::vector<JointTable>& slices_given_z,
                                         const std::vector<double>& pz) {
    double total = 0.0;
    for (std::size_t z = 0; z < pz.size(); ++z) {
        if (pz[z] > 0.0) {
            total += pz[z] * brute_force_mi(slices_given_z[z]);
        }
    }
    return total;
}

// ---- sidecar ----------------------------------------------------------------

inline nlohmann::json to_json(const ExpASpec& s) {
    return {{"experiment", "A"}, {"d", s.d}, {"m", s.m}, {"k0", s.k0 + 1}, {"k1", s.k1 + 1}, {"n", s.n},
            {"seed", s.seed}};
}

inline nlohmann::json to_json(const ExpBSpec& s) {
    auto one_based = [](const std::vector<std::size_t>& v) {
        std::vector<std::size_t> out(v);
        for (auto& i : out) {
            ++i;
        }
        return out;
    };
    return {{"experiment", "B"}, {"d1", s.d1}, {"d2", s.d2}, {"m", s.m}, {"k0", s.k0 + 1}, {"k1", s.k1 + 1},
            {"j", one_based(s.j_indices)}, {"i", one_based(s.i_indices)}, {"alpha", s.alpha}, {"beta", s.beta},
            {"n", s.n}, {"seed", s.seed}};
}

/// Sidecar document: generator spec, seed, 1-based ground truth, hash and cardinalities.
inline nlohmann::json make_sidecar(const nlohmann::json& spec, const Generated& g, const std::string& hash) {
    std::vector<std::size_t> truth(g.truth);
    for (auto& i : truth) {
        ++i;
    }
    return {{"schema_version", 1},
            {"spec", spec},
            {"seed", spec.at("seed")},
            {"ground_truth", truth},
            {"dataset_hash", hash},
            {"cardinalities", categorical_cardinalities(g.data)},
            {"warnings", g.warnings}};
}

} // namespace minerva::synth
