#pragma once

// Two-stage MINERVA feature selection.
//
// Stage 1 fits the statistics network at p = 1 by minimising v(theta, 1).
// Stage 2 starts from those weights and p = 1 and jointly minimises
//
//   loss = v(phi, p) + c1 * || p / ||p||_2 ||_1 + c2 * (||p||_2 - a)^2
//
// then snaps |p_i| <= eps to zero and returns the support of p.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/mine.hpp"
#include "minerva/ndgrad.hpp"
#include "minerva/rng.hpp"
#include "minerva/statnet.hpp"

namespace minerva {

using ndgrad::Graph;
using ndgrad::NodeId;
using ndgrad::Shape;
using ndgrad::Tensor;
using statnet::NetworkSpec;
using statnet::StatNetParams;

enum class OptimizerKind { Sgd, Adam };

/// How p is updated in stage 2. `Gradient` is the plain step; `Proximal` takes
/// the gradient step on the smooth part and soft-thresholds the L1 part, which
/// lets irrelevant weights reach exactly zero.
enum class WeightUpdate { Gradient, Proximal };

struct TrainConfig {
    double learning_rate = 1e-3;
    double c1 = 1.0;
    double c2 = 1.0;
    std::optional<double> drift_target; ///< a; defaults to sqrt(d)
    double threshold = 1e-5;            ///< eps
    std::size_t batch_size = 512;
    std::size_t stage1_max_steps = 5000;
    std::size_t stage2_max_steps = 10000;
    std::size_t patience = 10;
    std::uint64_t seed = 0;

    OptimizerKind optimizer = OptimizerKind::Adam;
    WeightUpdate weight_update = WeightUpdate::Proximal;
    /// Step for p. Unset means learning_rate.
    std::optional<double> weight_learning_rate = 2e-2;
    /// Step for phi in stage 2. Unset means learning_rate. Keeping it well below
    /// the p step stops the network from rescaling itself around a shrinking p_i.
    std::optional<double> stage2_learning_rate = 1e-4;
    double clip_norm = 10.0;
    std::size_t eval_every = 100;
    std::size_t eval_batches = 20;
    double holdout_fraction = 0.2;
    double min_improvement = 1e-4;
    /// Stage-2 early stopping is not considered before this many steps.
    std::size_t stage2_min_steps = 0;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) {
            throw ConfigError("learning_rate must be positive");
        }
        if (weight_learning_rate && !(*weight_learning_rate > 0.0)) {
            throw ConfigError("weight_learning_rate must be positive");
        }
        if (stage2_learning_rate && !(*stage2_learning_rate > 0.0)) {
            throw ConfigError("stage2_learning_rate must be positive");
        }
        if (!(c1 >= 0.0) || !(c2 >= 0.0)) {
            throw ConfigError("c1 and c2 must be non-negative");
        }
        if (drift_target && !(*drift_target > 0.0)) {
            throw ConfigError("drift_target must be positive");
        }
        if (!(threshold >= 0.0)) {
            throw ConfigError("threshold must be non-negative");
        }
        if (batch_size < 2) {
            throw ConfigError("batch_size must be at least 2");
        }
        if (eval_every < 1 || eval_batches < 1) {
            throw ConfigError("eval_every and eval_batches must be positive");
        }
        if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
            throw ConfigError("holdout_fraction must lie in (0, 1)");
        }
        if (!(clip_norm > 0.0)) {
            throw ConfigError("clip_norm must be positive");
        }
    }
};

struct TracePoint {
    int stage = 1;
    std::size_t step = 0; ///< global step (stage-2 steps continue after stage 1)
    double mi_nats = 0.0;
    double loss = 0.0;
};

struct SelectionResult {
    std::vector<std::size_t> selected; ///< sorted, 0-based
    std::vector<double> final_p;
    std::vector<TracePoint> mi_trace;
    std::size_t stage1_steps = 0;
    std::size_t stage2_steps = 0;
    double stage1_mi = 0.0; ///< held-out MI estimate returned by stage 1
    double final_mi = 0.0;  ///< held-out MI estimate at the end of stage 2
};

enum class SelectionClass { Exact, NonExactTypeI, NonExactTypeII };

inline std::string to_string(SelectionClass c) {
    switch (c) {
    case SelectionClass::Exact: return "Exact";
    case SelectionClass::NonExactTypeI: return "NonExactTypeI";
    case SelectionClass::NonExactTypeII: return "NonExactTypeII";
    }
    return "?";
}

/// Exact iff equal; Type I if any generating feature is missing; otherwise Type II.
inline SelectionClass classify_selection(const std::vector<std::size_t>& selected,
                                         const std::vector<std::size_t>& truth) {
    const std::set<std::size_t> s(selected.begin(), selected.end());
    const std::set<std::size_t> t(truth.begin(), truth.end());
    if (s == t) {
        return SelectionClass::Exact;
    }
    if (!std::includes(s.begin(), s.end(), t.begin(), t.end())) {
        return SelectionClass::NonExactTypeI;
    }
    return SelectionClass::NonExactTypeII;
}

/// {i : |p_i| > eps}.
inline std::vector<std::size_t> threshold_support(const std::vector<double>& p, double eps) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (std::abs(p[i]) > eps) {
            out.push_back(i);
        }
    }
    return out;
}

// ---- loss ---------------------------------------------------------------------

inline constexpr double kMinWeightNorm = 1e-12;

struct LossNodes {
    NodeId total;
    NodeId v;
    mine::MiEstimate estimate;
    double sparsity = 0.0; ///< ||p / ||p||_2||_1
    double drift = 0.0;    ///< (||p||_2 - a)^2
};

/// Builds v + c1 ||p/||p||_2||_1 + c2 (||p||_2 - a)^2 on the tape.
template <mine::Critic F>
LossNodes loss(Graph& g, F&& critic, NodeId p, double c1, double c2, double a, const mine::Batch& batch) {
    const NodeId norm = g.l2_norm(p);
    if (g.value(norm).item() < kMinWeightNorm) {
        throw DegenerateWeightsError("feature weights have ||p||_2 < 1e-12; the normalised L1 term is undefined");
    }
    auto obj = mine::v_objective(g, critic, batch);
    const NodeId sparsity = g.l1_norm(g.div(p, norm));
    const NodeId gap = g.sub(norm, g.constant(Tensor::scalar(a)));
    const NodeId drift = g.mul(gap, gap);
    const NodeId total = g.add(g.add(obj.value, g.scale(sparsity, c1)), g.scale(drift, c2));
    return {total, obj.value, obj.estimate, g.value(sparsity).item(), g.value(drift).item()};
}

/// Value of the two regularisers alone.
inline double regularizer(const std::vector<double>& p, double c1, double c2, double a) {
    double l1 = 0.0;
    double l2 = 0.0;
    for (double v : p) {
        l1 += std::abs(v);
        l2 += v * v;
    }
    l2 = std::sqrt(l2);
    if (l2 < kMinWeightNorm) {
        throw DegenerateWeightsError("feature weights have ||p||_2 < 1e-12");
    }
    return c1 * l1 / l2 + c2 * (l2 - a) * (l2 - a);
}

// ---- training machinery -----------------------------------------------------

namespace detail {

/// Rescales all gradients so their joint L2 norm is at most `max_norm`; returns the factor applied.
inline double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) {
        for (double v : g.data()) {
            sq += v * v;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) {
        return 1.0;
    }
    const double f = max_norm / norm;
    for (auto& g : grads) {
        for (double& v : g.data()) {
            v *= f;
        }
    }
    return f;
}

class Optimizer {
public:
    Optimizer(const TrainConfig& cfg, double lr) : cfg_(cfg), lr_(lr) {}

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
        if (cfg_.optimizer == OptimizerKind::Sgd) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                auto w = params[i]->data();
                auto g = grads[i].data();
                for (std::size_t k = 0; k < w.size(); ++k) {
                    w[k] -= lr_ * g[k];
                }
            }
            return;
        }
        if (m_.empty()) {
            for (const Tensor* p : params) {
                m_.emplace_back(p->size(), 0.0);
                v_.emplace_back(p->size(), 0.0);
            }
        }
        ++t_;
        const double b1 = cfg_.adam_beta1;
        const double b2 = cfg_.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto w = params[i]->data();
            auto g = grads[i].data();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.adam_epsilon);
            }
        }
    }

private:
    const TrainConfig& cfg_;
    double lr_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

/// Train/holdout split and batch streams for one run.
class Sampler {
public:
    Sampler(std::size_t n_rows, const TrainConfig& cfg) : cfg_(cfg) {
        if (n_rows < 2 * cfg.batch_size) {
            throw ContractError("dataset has " + std::to_string(n_rows) + " rows; training needs at least 2 * batch_size = " +
                                std::to_string(2 * cfg.batch_size));
        }
        Philox split_rng(cfg.seed, streams::kHoldoutSplit);
        std::vector<std::size_t> all = mine::sample_permutation(n_rows, split_rng);
        auto n_hold = static_cast<std::size_t>(std::round(cfg.holdout_fraction * static_cast<double>(n_rows)));
        n_hold = std::clamp<std::size_t>(n_hold, 2, n_rows - cfg.batch_size);
        holdout_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_hold));
        train_.assign(all.begin() + static_cast<std::ptrdiff_t>(n_hold), all.end());

        Philox eval_rng(cfg.seed, streams::kEvalBatches);
        const std::size_t eval_size = std::min(cfg.batch_size, holdout_.size());
        for (std::size_t b = 0; b < cfg.eval_batches; ++b) {
            std::vector<std::size_t> pool = holdout_;
            for (std::size_t i = 0; i < eval_size; ++i) {
                std::swap(pool[i], pool[i + eval_rng.index(pool.size() - i)]);
            }
            mine::Batch batch;
            batch.rows.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(eval_size));
            batch.sigma = mine::sample_permutation(eval_size, eval_rng);
            eval_.push_back(std::move(batch));
        }
    }

    /// Next training batch from an epoch-shuffled stream with a fresh permutation.
    mine::Batch next(Philox& rng) {
        if (cursor_ + cfg_.batch_size > order_.size()) {
            order_ = train_;
            for (std::size_t i = order_.size() - 1; i > 0; --i) {
                std::swap(order_[i], order_[rng.index(i + 1)]);
            }
            cursor_ = 0;
        }
        mine::Batch batch;
        batch.rows.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                          order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + cfg_.batch_size));
        cursor_ += cfg_.batch_size;
        batch.sigma = mine::sample_permutation(batch.rows.size(), rng);
        return batch;
    }

    const std::vector<mine::Batch>& eval_batches() const noexcept { return eval_; }
    const std::vector<std::size_t>& holdout() const noexcept { return holdout_; }
    const std::vector<std::size_t>& train() const noexcept { return train_; }

private:
    const TrainConfig& cfg_;
    std::vector<std::size_t> train_, holdout_, order_;
    std::size_t cursor_ = 0;
    std::vector<mine::Batch> eval_;
};

inline std::vector<Tensor> param_grads(const Graph& g, const std::vector<NodeId>& ids) {
    std::vector<Tensor> out;
    out.reserve(ids.size());
    for (NodeId id : ids) {
        out.push_back(g.grad(id));
    }
    return out;
}

} // namespace detail

/// Mean v over fixed batches (forward only).
inline mine::MiEstimate evaluate_objective(const NetworkSpec& spec, const StatNetParams& params,
                                           const std::vector<double>& p, const Dataset& data,
                                           const std::vector<mine::Batch>& batches) {
    mine::MiEstimate acc;
    for (const auto& batch : batches) {
        Graph g(false);
        const NodeId p_node = g.constant(Tensor::vector(p));
        statnet::BoundNetwork net(g, spec, params, p_node, data, false);
        const auto obj = mine::v_objective(g, net, batch);
        acc.value += obj.estimate.value;
        acc.mu += obj.estimate.mu;
        acc.log_nu += obj.estimate.log_nu;
        acc.n += obj.estimate.n;
    }
    const auto k = static_cast<double>(batches.size());
    acc.mu /= k;
    acc.log_nu /= k;
    acc.value = -acc.mu + acc.log_nu;
    return acc;
}

/// Held-out MI estimate (nats) for a trained network, averaged over the run's evaluation batches.
inline double heldout_mi(const Dataset& data, const NetworkSpec& spec, const StatNetParams& params,
                         const std::vector<double>& p, const TrainConfig& config) {
    detail::Sampler sampler(data.rows(), config);
    return evaluate_objective(spec, params, p, data, sampler.eval_batches()).mi();
}

struct Stage1Result {
    StatNetParams params;
    std::size_t steps = 0;
    double heldout_mi = 0.0;
    std::vector<TracePoint> trace;
};

/// Minimise v(theta, 1); returns the parameters with the best held-out estimate.
inline Stage1Result stage1_train(const Dataset& data, const NetworkSpec& spec, const TrainConfig& config) {
    config.validate();
    data.validate();
    detail::Sampler sampler(data.rows(), config);
    Philox rng(config.seed, streams::kStage1Batches);
    const std::vector<double> ones(spec.feature_count(), 1.0);

    Stage1Result out;
    out.params = statnet::init_params(spec, config.seed);
    StatNetParams best = out.params;
    double best_mi = evaluate_objective(spec, out.params, ones, data, sampler.eval_batches()).mi();
    out.trace.push_back({1, 0, best_mi, -best_mi});
    detail::Optimizer opt(config, config.learning_rate);
    std::size_t stale = 0;
    std::size_t step = 0;
    while (step < config.stage1_max_steps) {
        const mine::Batch batch = sampler.next(rng);
        Graph g(false);
        const NodeId p = g.constant(Tensor::vector(ones));
        statnet::BoundNetwork net(g, spec, out.params, p, data, true);
        mine::Objective obj;
        try {
            obj = mine::v_objective(g, net, batch);
        } catch (const NumericError& e) {
            throw TrainingError(1, step, e.what());
        }
        if (!std::isfinite(obj.estimate.value)) {
            throw TrainingError(1, step, "loss is not finite");
        }
        g.backward(obj.value);
        auto grads = detail::param_grads(g, net.param_nodes());
        detail::clip_global_norm(grads, config.clip_norm);
        opt.step(out.params.tensors(), grads);
        ++step;

        if (step % config.eval_every == 0 || step == config.stage1_max_steps) {
            const double mi = evaluate_objective(spec, out.params, ones, data, sampler.eval_batches()).mi();
            if (!std::isfinite(mi)) {
                throw TrainingError(1, step, "held-out estimate is not finite");
            }
            out.trace.push_back({1, step, mi, -mi});
            if (mi > best_mi + config.min_improvement) {
                best_mi = mi;
                best = out.params;
                stale = 0;
            } else if (mi > best_mi) {
                best_mi = mi;
                best = out.params;
                ++stale;
            } else {
                ++stale;
            }
            if (stale >= config.patience) {
                break;
            }
        }
    }
    out.params = std::move(best);
    out.steps = step;
    out.heldout_mi = best_mi;
    return out;
}

/// Joint minimisation of the regularised loss over (phi, p), starting from stage-1 weights.
inline SelectionResult stage2_train(const StatNetParams& params_init, const Dataset& data, const NetworkSpec& spec,
                                    const TrainConfig& config, std::size_t step_offset = 0) {
    config.validate();
    data.validate();
    detail::Sampler sampler(data.rows(), config);
    Philox rng(config.seed, streams::kStage2Batches);
    const std::size_t d = spec.feature_count();
    const double a = config.drift_target.value_or(std::sqrt(static_cast<double>(d)));
    const double p_lr = config.weight_learning_rate.value_or(config.learning_rate);

    StatNetParams phi = params_init;
    std::vector<double> p(d, 1.0);
    detail::Optimizer opt(config, config.stage2_learning_rate.value_or(config.learning_rate));

    auto eval_loss = [&](mine::MiEstimate& est) {
        est = evaluate_objective(spec, phi, p, data, sampler.eval_batches());
        return est.value + regularizer(p, config.c1, config.c2, a);
    };

    SelectionResult out;
    mine::MiEstimate est;
    double best = eval_loss(est);
    out.mi_trace.push_back({2, step_offset, est.mi(), best});
    std::size_t stale = 0;
    std::size_t step = 0;
    while (step < config.stage2_max_steps) {
        const mine::Batch batch = sampler.next(rng);
        Graph g(false);
        const NodeId p_node = g.parameter(Tensor::vector(p));
        statnet::BoundNetwork net(g, spec, phi, p_node, data, true);
        LossNodes l;
        try {
            l = loss(g, net, p_node, config.c1, config.c2, a, batch);
        } catch (const DegenerateWeightsError&) {
            throw;
        } catch (const NumericError& e) {
            throw TrainingError(2, step, e.what());
        }
        const double total = g.value(l.total).item();
        if (!std::isfinite(total)) {
            throw TrainingError(2, step, "loss is not finite");
        }
        g.backward(l.total);
        auto grads = detail::param_grads(g, net.param_nodes());
        grads.push_back(g.grad(p_node));
        const double clip = detail::clip_global_norm(grads, config.clip_norm);
        Tensor p_grad = std::move(grads.back());
        grads.pop_back();
        opt.step(phi.tensors(), grads);

        if (config.weight_update == WeightUpdate::Gradient) {
            for (std::size_t i = 0; i < d; ++i) {
                p[i] -= p_lr * p_grad[i];
            }
        } else {
            // The autodiff gradient contains c1 * sign(p_i) / ||p||; step on the
            // rest, then soft-threshold with the same (clipped) weight.
            double norm = 0.0;
            for (double v : p) {
                norm += v * v;
            }
            norm = std::sqrt(norm);
            const double shrink = p_lr * clip * config.c1 / norm;
            for (std::size_t i = 0; i < d; ++i) {
                const double sgn = static_cast<double>((p[i] > 0.0) - (p[i] < 0.0));
                const double smooth = p_grad[i] - clip * config.c1 * sgn / norm;
                const double z = p[i] - p_lr * smooth;
                p[i] = std::copysign(std::max(std::abs(z) - shrink, 0.0), z);
            }
        }
        ++step;

        double norm = 0.0;
        for (double v : p) {
            norm += v * v;
        }
        if (std::sqrt(norm) < kMinWeightNorm) {
            throw DegenerateWeightsError("stage 2, step " + std::to_string(step) +
                                         ": feature weights collapsed to ||p||_2 < 1e-12");
        }
        for (double v : p) {
            if (!std::isfinite(v)) {
                throw TrainingError(2, step, "feature weights are not finite");
            }
        }

        if (step % config.eval_every == 0 || step == config.stage2_max_steps) {
            const double value = eval_loss(est);
            if (!std::isfinite(value)) {
                throw TrainingError(2, step, "held-out loss is not finite");
            }
            out.mi_trace.push_back({2, step_offset + step, est.mi(), value});
            if (value < best - config.min_improvement) {
                best = value;
                stale = 0;
            } else {
                best = std::min(best, value);
                ++stale;
            }
            if (stale >= config.patience && step >= config.stage2_min_steps) {
                break;
            }
        }
    }
    for (double& v : p) {
        if (std::abs(v) <= config.threshold) {
            v = 0.0;
        }
    }
    out.final_mi = est.mi();
    out.selected = threshold_support(p, config.threshold);
    out.final_p = std::move(p);
    out.stage2_steps = step;
    return out;
}

/// stage1_train followed by stage2_train; trace and step counts cover both stages.
inline SelectionResult select_features(const Dataset& data, const NetworkSpec& spec, const TrainConfig& config) {
    Stage1Result s1 = stage1_train(data, spec, config);
    SelectionResult out = stage2_train(s1.params, data, spec, config, s1.steps);
    out.stage1_steps = s1.steps;
    out.stage1_mi = s1.heldout_mi;
    s1.trace.insert(s1.trace.end(), out.mi_trace.begin(), out.mi_trace.end());
    out.mi_trace = std::move(s1.trace);
    return out;
}

} // namespace minerva
