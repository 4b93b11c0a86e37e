#pragma once

// Statistics network f(p ⊙ x, y) -> R.
//
//   categorical feature j : p_j * softclamp(E_j[x_j])       (width embed_width(card_j))
//   float feature j       : p_j * x_j                        (width 1)
//   h  = [features] W_proj + b_proj                          (width hidden)
//   u  = [h, t(y)]                                           (width hidden + target width)
//   u <- u + relu(u W1 + b1) W2 + b2                         (per residual block)
//   out = u W_head + b_head                                  (width 1, linear)
//
// t(y) is the raw value for float targets and softclamp(E_y[y]) for
// categorical targets. The residual stream carries the target alongside the
// projected features; `hidden_width` is the inner width of each block.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "minerva/dataset.hpp"
#include "minerva/errors.hpp"
#include "minerva/ndgrad.hpp"
#include "minerva/rng.hpp"

namespace minerva::statnet {

using ndgrad::Graph;
using ndgrad::NodeId;
using ndgrad::Shape;
using ndgrad::Tensor;

struct NetworkSpec {
    /// One entry per feature in dataset order: vocabulary size, or 0 for a float feature.
    std::vector<std::size_t> feature_cardinalities;
    /// Vocabulary size of a categorical target, or 0 for a float target.
    std::size_t target_cardinality = 0;
    std::size_t hidden_width = 64;
    std::size_t n_residual_blocks = 2;
    double clamp_bound = 5.0;
    std::size_t max_embed_dim = 16;
    std::size_t target_embed_dim = 4;

    std::size_t feature_count() const noexcept { return feature_cardinalities.size(); }

    /// 1 for scalar targets, the vocabulary size for categorical ones.
    std::size_t target_arity() const noexcept { return target_cardinality == 0 ? 1 : target_cardinality; }

    std::size_t n_float_features() const noexcept {
        return static_cast<std::size_t>(
            std::count(feature_cardinalities.begin(), feature_cardinalities.end(), std::size_t{0}));
    }

    std::vector<std::size_t> cat_cardinalities() const {
        std::vector<std::size_t> out;
        std::copy_if(feature_cardinalities.begin(), feature_cardinalities.end(), std::back_inserter(out),
                     [](std::size_t c) { return c > 0; });
        return out;
    }

    /// min(max_embed_dim, ceil(sqrt(cardinality))), at least 1.
    std::size_t embed_width(std::size_t cardinality) const noexcept {
        const auto w = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(cardinality))));
        return std::max<std::size_t>(1, std::min(max_embed_dim, w));
    }

    std::size_t feature_width(std::size_t j) const noexcept {
        const std::size_t c = feature_cardinalities[j];
        return c == 0 ? 1 : embed_width(c);
    }

    std::size_t input_width() const noexcept {
        std::size_t w = 0;
        for (std::size_t j = 0; j < feature_count(); ++j) {
            w += feature_width(j);
        }
        return w;
    }

    std::size_t target_width() const noexcept { return target_cardinality == 0 ? 1 : target_embed_dim; }
    std::size_t stream_width() const noexcept { return hidden_width + target_width(); }

    void validate() const {
        if (feature_cardinalities.empty()) {
            throw ConfigError("network spec: at least one feature is required");
        }
        if (hidden_width < 1 || n_residual_blocks < 1) {
            throw ConfigError("network spec: hidden_width and n_residual_blocks must be >= 1");
        }
        if (!(clamp_bound > 0.0)) {
            throw ConfigError("network spec: clamp_bound must be positive");
        }
        if (max_embed_dim < 1 || target_embed_dim < 1) {
            throw ConfigError("network spec: embedding widths must be >= 1");
        }
    }

    static NetworkSpec for_dataset(const Dataset& data, std::size_t hidden_width = 64, std::size_t blocks = 2,
                                   double clamp_bound = 5.0) {
        NetworkSpec spec;
        for (const auto& c : data.features) {
            spec.feature_cardinalities.push_back(c.is_categorical() ? c.cardinality : 0);
        }
        spec.target_cardinality = data.target.is_categorical() ? data.target.cardinality : 0;
        spec.hidden_width = hidden_width;
        spec.n_residual_blocks = blocks;
        spec.clamp_bound = clamp_bound;
        spec.validate();
        return spec;
    }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

inline void to_json(nlohmann::json& j, const NetworkSpec& s) {
    j = nlohmann::json{{"feature_cardinalities", s.feature_cardinalities},
                       {"target_cardinality", s.target_cardinality},
                       {"hidden_width", s.hidden_width},
                       {"n_residual_blocks", s.n_residual_blocks},
                       {"clamp_bound", s.clamp_bound},
                       {"max_embed_dim", s.max_embed_dim},
                       {"target_embed_dim", s.target_embed_dim}};
}

inline void from_json(const nlohmann::json& j, NetworkSpec& s) {
    j.at("feature_cardinalities").get_to(s.feature_cardinalities);
    j.at("target_cardinality").get_to(s.target_cardinality);
    j.at("hidden_width").get_to(s.hidden_width);
    j.at("n_residual_blocks").get_to(s.n_residual_blocks);
    j.at("clamp_bound").get_to(s.clamp_bound);
    j.at("max_embed_dim").get_to(s.max_embed_dim);
    j.at("target_embed_dim").get_to(s.target_embed_dim);
}

struct ResidualBlock {
    Tensor w1, b1, w2, b2;
};

/// All trainable parameters. Row-vector convention: y = x W + b.
struct StatNetParams {
    std::vector<Tensor> embeddings; ///< one per categorical feature, in feature order
    Tensor target_embedding;        ///< empty (size 0) for float targets
    Tensor proj_w, proj_b;
    std::vector<ResidualBlock> blocks;
    Tensor head_w, head_b;

    /// Fixed traversal order shared by init, binding, optimizers and checkpoints.
    template <class Self, class F>
    static void visit(Self& self, F&& f) {
        for (std::size_t i = 0; i < self.embeddings.size(); ++i) {
            f("embedding." + std::to_string(i), self.embeddings[i]);
        }
        if (self.target_embedding.size() > 0) {
            f(std::string("target_embedding"), self.target_embedding);
        }
        f(std::string("proj.w"), self.proj_w);
        f(std::string("proj.b"), self.proj_b);
        for (std::size_t i = 0; i < self.blocks.size(); ++i) {
            const std::string p = "block." + std::to_string(i) + ".";
            f(p + "w1", self.blocks[i].w1);
            f(p + "b1", self.blocks[i].b1);
            f(p + "w2", self.blocks[i].w2);
            f(p + "b2", self.blocks[i].b2);
        }
        f(std::string("head.w"), self.head_w);
        f(std::string("head.b"), self.head_b);
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        visit(*this, [&out](const std::string&, Tensor& t) { out.push_back(&t); });
        return out;
    }

    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        visit(*this, [&out](const std::string&, const Tensor& t) { out.push_back(&t); });
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Tensor* t : tensors()) {
            n += t->size();
        }
        return n;
    }

    friend bool operator==(const StatNetParams& a, const StatNetParams& b) {
        auto ta = a.tensors();
        auto tb = b.tensors();
        if (ta.size() != tb.size()) {
            return false;
        }
        for (std::size_t i = 0; i < ta.size(); ++i) {
            if (!(*ta[i] == *tb[i])) {
                return false;
            }
        }
        return true;
    }
};

/// Number of scalars in StatNetParams for `spec`, computed from the spec alone.
inline std::size_t parameter_count(const NetworkSpec& spec) {
    std::size_t n = 0;
    for (std::size_t c : spec.cat_cardinalities()) {
        n += c * spec.embed_width(c);
    }
    if (spec.target_cardinality > 0) {
        n += spec.target_cardinality * spec.target_embed_dim;
    }
    const std::size_t h = spec.hidden_width;
    const std::size_t s = spec.stream_width();
    n += spec.input_width() * h + h;
    n += spec.n_residual_blocks * (s * h + h + h * s + s);
    n += s + 1;
    return n;
}

/// Glorot-uniform weights, zero biases, deterministic in (spec, seed).
inline StatNetParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Philox rng(seed, streams::kNetworkInit);
    auto glorot = [&rng](std::size_t fan_in, std::size_t fan_out) {
        Tensor t(Shape{fan_in, fan_out});
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : t.data()) {
            v = rng.uniform(-limit, limit);
        }
        return t;
    };
    StatNetParams p;
    for (std::size_t c : spec.cat_cardinalities()) {
        p.embeddings.push_back(glorot(c, spec.embed_width(c)));
    }
    if (spec.target_cardinality > 0) {
        p.target_embedding = glorot(spec.target_cardinality, spec.target_embed_dim);
    }
    const std::size_t h = spec.hidden_width;
    const std::size_t s = spec.stream_width();
    p.proj_w = glorot(spec.input_width(), h);
    p.proj_b = Tensor(Shape{1, h});
    for (std::size_t b = 0; b < spec.n_residual_blocks; ++b) {
        ResidualBlock blk;
        blk.w1 = glorot(s, h);
        blk.b1 = Tensor(Shape{1, h});
        blk.w2 = glorot(h, s);
        blk.b2 = Tensor(Shape{1, s});
        p.blocks.push_back(std::move(blk));
    }
    p.head_w = glorot(s, 1);
    p.head_b = Tensor(Shape{1, 1});
    return p;
}

/// bound * tanh(x / bound), elementwise.
inline NodeId soft_clamp(Graph& g, NodeId x, double bound) {
    if (!(bound > 0.0)) {
        throw ConfigError("soft_clamp: bound must be positive, got " + std::to_string(bound));
    }
    return g.scale(g.tanh(g.scale(x, 1.0 / bound)), bound);
}

inline double soft_clamp(double x, double bound) {
    if (!(bound > 0.0)) {
        throw ConfigError("soft_clamp: bound must be positive, got " + std::to_string(bound));
    }
    return bound * std::tanh(x / bound);
}

/// The network bound to one tape: parameters registered once, callable on any
/// number of (x rows, y rows) pairings that share them.
class BoundNetwork {
public:
    /// `p` must be a node of size d. With `trainable` false the parameters enter as constants.
    BoundNetwork(Graph& g, const NetworkSpec& spec, const StatNetParams& params, NodeId p, const Dataset& data,
                 bool trainable = true)
        : g_(g), spec_(spec), data_(data) {
        check_layout();
        if (g.value(p).size() != spec.feature_count()) {
            throw DimensionError("feature weights have " + std::to_string(g.value(p).size()) +
                                 " entries, network expects " + std::to_string(spec.feature_count()));
        }
        for (const Tensor* t : params.tensors()) {
            param_nodes_.push_back(trainable ? g.parameter(*t) : g.constant(*t));
        }
        std::size_t k = 0;
        for (std::size_t j = 0; j < spec.feature_count(); ++j) {
            if (spec.feature_cardinalities[j] > 0) {
                clamped_.push_back(soft_clamp(g, param_nodes_[k++], spec.clamp_bound));
            } else {
                clamped_.push_back(0);
            }
        }
        if (spec.target_cardinality > 0) {
            target_table_ = soft_clamp(g, param_nodes_[k++], spec.clamp_bound);
        }
        proj_w_ = param_nodes_[k++];
        proj_b_ = param_nodes_[k++];
        for (std::size_t b = 0; b < spec.n_residual_blocks; ++b) {
            blocks_.push_back({param_nodes_[k], param_nodes_[k + 1], param_nodes_[k + 2], param_nodes_[k + 3]});
            k += 4;
        }
        head_w_ = param_nodes_[k++];
        head_b_ = param_nodes_[k++];

        // p_j repeated across feature j's input width, as a single row.
        std::vector<std::size_t> expand;
        for (std::size_t j = 0; j < spec.feature_count(); ++j) {
            expand.insert(expand.end(), spec.feature_width(j), j);
        }
        const NodeId p_col = g.reshape(p, Shape{spec.feature_count(), 1});
        gate_ = g.reshape(g.gather_rows(p_col, std::move(expand)), Shape{1, spec.input_width()});
    }

    /// Scores f(p ⊙ x[x_rows[i]], y[y_rows[i]]) as an (n, 1) node.
    NodeId operator()(std::span<const std::size_t> x_rows, std::span<const std::size_t> y_rows) {
        if (x_rows.size() != y_rows.size()) {
            throw DimensionError("forward: " + std::to_string(x_rows.size()) + " feature rows vs " +
                                 std::to_string(y_rows.size()) + " target rows");
        }
        const std::size_t n = x_rows.size();
        std::vector<NodeId> parts;
        parts.reserve(spec_.feature_count());
        for (std::size_t j = 0; j < spec_.feature_count(); ++j) {
            const Column& col = data_.features[j];
            if (spec_.feature_cardinalities[j] > 0) {
                parts.push_back(g_.gather_rows(clamped_[j], codes(col, j, x_rows)));
            } else {
                Tensor t(Shape{n, 1});
                for (std::size_t i = 0; i < n; ++i) {
                    t[i] = col.values[x_rows[i]];
                }
                parts.push_back(g_.constant(std::move(t)));
            }
        }
        const NodeId inputs = g_.mul(parts.size() == 1 ? parts[0] : g_.concat(parts), gate_);
        const NodeId h = g_.add(g_.matmul(inputs, proj_w_), proj_b_);

        NodeId t;
        if (spec_.target_cardinality > 0) {
            t = g_.gather_rows(target_table_, codes(data_.target, spec_.feature_count(), y_rows));
        } else {
            Tensor tv(Shape{n, 1});
            for (std::size_t i = 0; i < n; ++i) {
                tv[i] = data_.target.values[y_rows[i]];
            }
            t = g_.constant(std::move(tv));
        }
        NodeId u = g_.concat({h, t});
        for (const auto& b : blocks_) {
            const NodeId inner = g_.relu(g_.add(g_.matmul(u, b.w1), b.b1));
            u = g_.add(u, g_.add(g_.matmul(inner, b.w2), b.b2));
        }
        return g_.add(g_.matmul(u, head_w_), head_b_);
    }

    /// Parameter nodes in StatNetParams::tensors() order.
    const std::vector<NodeId>& param_nodes() const noexcept { return param_nodes_; }

private:
    struct BlockNodes {
        NodeId w1, b1, w2, b2;
    };

    void check_layout() const {
        spec_.validate();
        if (data_.feature_count() != spec_.feature_count()) {
            throw DataError("dataset has " + std::to_string(data_.feature_count()) + " features, network expects " +
                            std::to_string(spec_.feature_count()));
        }
        for (std::size_t j = 0; j < spec_.feature_count(); ++j) {
            if (data_.features[j].is_categorical() != (spec_.feature_cardinalities[j] > 0)) {
                throw DataError("feature " + std::to_string(j + 1) + " ('" + data_.features[j].name +
                                "') kind does not match the network spec");
            }
        }
        if (data_.target.is_categorical() != (spec_.target_cardinality > 0)) {
            throw DataError("target kind does not match the network spec");
        }
    }

    std::vector<std::size_t> codes(const Column& col, std::size_t j, std::span<const std::size_t> rows) const {
        const std::size_t card = j < spec_.feature_count() ? spec_.feature_cardinalities[j] : spec_.target_cardinality;
        std::vector<std::size_t> out(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto c = col.codes[rows[i]];
            if (c < 0 || static_cast<std::size_t>(c) >= card) {
                throw DataError("feature '" + col.name + "' row " + std::to_string(rows[i]) + ": category " +
                                std::to_string(c + 1) + " exceeds cardinality " + std::to_string(card));
            }
            out[i] = static_cast<std::size_t>(c);
        }
        return out;
    }

    Graph& g_;
    const NetworkSpec& spec_;
    const Dataset& data_;
    std::vector<NodeId> param_nodes_;
    std::vector<NodeId> clamped_;
    NodeId target_table_ = 0;
    NodeId proj_w_ = 0, proj_b_ = 0;
    std::vector<BlockNodes> blocks_;
    NodeId head_w_ = 0, head_b_ = 0;
    NodeId gate_ = 0;
};

/// Tape-free convenience: scores for the given pairing as an (n, 1) tensor.
inline Tensor forward(const NetworkSpec& spec, const StatNetParams& params, std::span<const double> p,
                      const Dataset& data, std::span<const std::size_t> x_rows, std::span<const std::size_t> y_rows) {
    Graph g(false);
    const NodeId p_node = g.constant(Tensor::vector({p.begin(), p.end()}));
    BoundNetwork net(g, spec, params, p_node, data, false);
    return g.value(net(x_rows, y_rows));
}

// ---- checkpoints ------------------------------------------------------------
//
// Layout: one line of JSON (spec + per-tensor name/shape/offset, offsets in
// reals), space-padded so the payload starts on an 8-byte boundary, then the
// parameters as 64-bit little-endian IEEE-754 reals in tensors() order.

inline void save_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec, const StatNetParams& params) {
    nlohmann::json header;
    header["format"] = "minerva-statnet";
    header["schema_version"] = 1;
    header["spec"] = spec;
    auto& list = header["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    StatNetParams::visit(params, [&](const std::string& name, const Tensor& t) {
        list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size();
    });
    header["count"] = offset;
    std::string head = header.dump();
    const std::size_t total = head.size() + 1;
    head.append((8 - total % 8) % 8, ' ');
    head.push_back('\n');

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const Tensor* t : params.tensors()) {
        for (double v : t->data()) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            if constexpr (std::endian::native == std::endian::big) {
                bits = __builtin_bswap64(bits);
            }
            out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
        }
    }
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

struct Checkpoint {
    NetworkSpec spec;
    StatNetParams params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) {
        throw DataError("checkpoint '" + path.string() + "' has no header line");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint header: " + std::string(e.what()));
    }
    if (header.value("format", "") != "minerva-statnet") {
        throw DataError("checkpoint '" + path.string() + "' has an unknown format");
    }
    Checkpoint ck;
    ck.spec = header.at("spec").get<NetworkSpec>();
    ck.params = init_params(ck.spec, 0);
    const std::size_t count = header.at("count").get<std::size_t>();
    const std::size_t payload = nl + 1;
    if (bytes.size() != payload + count * 8 || count != ck.params.parameter_count()) {
        throw DataError("checkpoint '" + path.string() + "' payload size does not match its spec");
    }
    auto tensors = ck.params.tensors();
    const auto& list = header.at("tensors");
    if (list.size() != tensors.size()) {
        throw DataError("checkpoint tensor list does not match its spec");
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto offset = list[i].at("offset").get<std::size_t>();
        if (list[i].at("shape").get<Shape>() != tensors[i]->shape()) {
            throw DataError("checkpoint tensor '" + list[i].at("name").get<std::string>() + "' has the wrong shape");
        }
        for (std::size_t k = 0; k < tensors[i]->size(); ++k) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, bytes.data() + payload + (offset + k) * 8, 8);
            if constexpr (std::endian::native == std::endian::big) {
                bits = __builtin_bswap64(bits);
            }
            (*tensors[i])[k] = std::bit_cast<double>(bits);
        }
    }
    return ck;
}

} // namespace minerva::statnet
