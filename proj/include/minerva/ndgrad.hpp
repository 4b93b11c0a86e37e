#pragma once

// Dense 64-bit tensors with a reverse-mode tape.
//
// Every tensor is viewed as a row-major matrix: rank 2 is (rows, cols), rank 1
// is a single row, rank 0 is 1x1, higher ranks fold trailing dimensions into
// columns. Binary elementwise ops broadcast the right operand when it is a
// scalar or a single row matching the left operand's column count.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "minerva/errors.hpp"

namespace minerva::ndgrad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    if (shape.size() == 1) {
        os << ',';
    }
    os << ')';
    return os.str();
}

class Tensor {
public:
    Tensor() : shape_{0} {}

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size()) {
            throw DimensionError("tensor shape " + shape_string(shape_) + " holds " +
                                 std::to_string(shape_size(shape_)) + " values, got " +
                                 std::to_string(data_.size()));
        }
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    static Tensor vector(std::vector<double> v) {
        const std::size_t n = v.size();
        return Tensor(Shape{n}, std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor(Shape{rows, cols}, std::move(v));
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        std::vector<double> data;
        std::size_t cols = rows.size() ? rows.begin()->size() : 0;
        for (const auto& r : rows) {
            if (r.size() != cols) {
                throw DimensionError("ragged matrix literal");
            }
            data.insert(data.end(), r.begin(), r.end());
        }
        return Tensor(Shape{rows.size(), cols}, std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::size_t rows() const noexcept {
        if (shape_.size() <= 1) {
            return 1;
        }
        return shape_[0];
    }

    std::size_t cols() const noexcept {
        if (shape_.empty()) {
            return 1;
        }
        if (shape_.size() == 1) {
            return shape_[0];
        }
        return shape_[0] == 0 ? 0 : data_.size() / shape_[0];
    }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }

    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator[](std::size_t i) noexcept { return data_[i]; }

    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    double item() const {
        if (data_.size() != 1) {
            throw ContractError("item() on tensor of shape " + shape_string(shape_));
        }
        return data_[0];
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    void fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

using NodeId = std::size_t;

enum class Op {
    Constant,
    Parameter,
    Matmul,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Tanh,
    Relu,
    Exp,
    Log,
    Mean,
    Sum,
    Concat,
    GatherRows,
    L1Norm,
    L2Norm,
    LogMeanExp,
    Reshape,
};

/// A single-use tape. Build one per batch, call backward() once on a scalar node.
class Graph {
public:
    explicit Graph(bool check_finite =
#ifdef NDEBUG
                       false
#else
                       true
#endif
                   )
        : check_finite_(check_finite) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = default;
    Graph& operator=(Graph&&) = default;

    NodeId constant(Tensor value) { return push(Op::Constant, {}, std::move(value), false); }
    NodeId parameter(Tensor value) { return push(Op::Parameter, {}, std::move(value), true); }

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }

    bool has_grad(NodeId id) const { return nodes_.at(id).needs_grad && grads_ready_; }

    /// Gradient of the last backward() loss with respect to node `id`.
    const Tensor& grad(NodeId id) const {
        const Node& n = nodes_.at(id);
        if (!grads_ready_ || !n.needs_grad) {
            throw ContractError("node " + std::to_string(id) + " has no gradient");
        }
        return n.grad;
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    Op op(NodeId id) const { return nodes_.at(id).op; }
    const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }

    // ---- forward ops ------------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.shape().size() != 2 || B.shape().size() != 2 || A.cols() != B.rows()) {
            throw DimensionError("matmul: cannot multiply " + shape_string(A.shape()) + " by " +
                                 shape_string(B.shape()));
        }
        Tensor out(Shape{A.rows(), B.cols()});
        map(out) = cmap(A) * cmap(B);
        return push(Op::Matmul, {a, b}, std::move(out));
    }

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b, [](double x, double y) { return x + y; }); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b, [](double x, double y) { return x - y; }); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b, [](double x, double y) { return x * y; }); }
    NodeId div(NodeId a, NodeId b) { return binary(Op::Div, a, b, [](double x, double y) { return x / y; }); }

    NodeId scale(NodeId a, double factor) {
        Tensor out = value(a);
        for (double& v : out.data()) {
            v *= factor;
        }
        NodeId id = push(Op::Scale, {a}, std::move(out));
        nodes_[id].scalar = factor;
        return id;
    }

    NodeId tanh(NodeId a) { return unary(Op::Tanh, a, [](double x) { return std::tanh(x); }); }
    NodeId relu(NodeId a) { return unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; }); }
    NodeId exp(NodeId a) { return unary(Op::Exp, a, [](double x) { return std::exp(x); }); }

    NodeId log(NodeId a) {
        for (double v : value(a).data()) {
            if (!(v > 0.0)) {
                throw NumericError("log of non-positive value " + std::to_string(v));
            }
        }
        return unary(Op::Log, a, [](double x) { return std::log(x); });
    }

    NodeId mean(NodeId a) {
        const Tensor& A = value(a);
        if (A.size() == 0) {
            throw ContractError("mean of empty tensor");
        }
        const double s = std::accumulate(A.data().begin(), A.data().end(), 0.0);
        return push(Op::Mean, {a}, Tensor::scalar(s / static_cast<double>(A.size())));
    }

    NodeId sum(NodeId a) {
        const Tensor& A = value(a);
        return push(Op::Sum, {a}, Tensor::scalar(std::accumulate(A.data().begin(), A.data().end(), 0.0)));
    }

    /// Column-wise concatenation of matrices with equal row counts.
    NodeId concat(const std::vector<NodeId>& parts) {
        if (parts.empty()) {
            throw ContractError("concat of zero tensors");
        }
        const std::size_t rows = value(parts[0]).rows();
        std::size_t cols = 0;
        for (NodeId p : parts) {
            const Tensor& t = value(p);
            if (t.rows() != rows) {
                throw DimensionError("concat: row mismatch " + shape_string(value(parts[0]).shape()) +
                                     " vs " + shape_string(t.shape()));
            }
            cols += t.cols();
        }
        Tensor out(Shape{rows, cols});
        std::size_t offset = 0;
        for (NodeId p : parts) {
            const Tensor& t = value(p);
            const std::size_t w = t.cols();
            for (std::size_t r = 0; r < rows; ++r) {
                std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(r * w), w,
                            out.data().begin() + static_cast<std::ptrdiff_t>(r * cols + offset));
            }
            offset += w;
        }
        return push(Op::Concat, parts, std::move(out));
    }

    /// out[i, :] = table[indices[i], :]
    NodeId gather_rows(NodeId table, std::vector<std::size_t> indices) {
        const Tensor& T = value(table);
        const std::size_t w = T.cols();
        Tensor out(Shape{indices.size(), w});
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] >= T.rows()) {
                throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                                     " out of range for " + shape_string(T.shape()));
            }
            std::copy_n(T.data().begin() + static_cast<std::ptrdiff_t>(indices[i] * w), w,
                        out.data().begin() + static_cast<std::ptrdiff_t>(i * w));
        }
        NodeId id = push(Op::GatherRows, {table}, std::move(out));
        nodes_[id].indices = std::move(indices);
        return id;
    }

    NodeId l1_norm(NodeId a) {
        double s = 0.0;
        for (double v : value(a).data()) {
            s += std::abs(v);
        }
        return push(Op::L1Norm, {a}, Tensor::scalar(s));
    }

    NodeId l2_norm(NodeId a) {
        double s = 0.0;
        for (double v : value(a).data()) {
            s += v * v;
        }
        return push(Op::L2Norm, {a}, Tensor::scalar(std::sqrt(s)));
    }

    /// log(mean(exp(a))) computed as max(a) + log(mean(exp(a - max(a)))).
    NodeId log_mean_exp(NodeId a) {
        const Tensor& A = value(a);
        if (A.size() == 0) {
            throw ContractError("log_mean_exp of empty tensor");
        }
        const double m = *std::max_element(A.data().begin(), A.data().end());
        if (!std::isfinite(m)) {
            throw NumericError("log_mean_exp: non-finite input");
        }
        double s = 0.0;
        for (double v : A.data()) {
            s += std::exp(v - m);
        }
        return push(Op::LogMeanExp, {a}, Tensor::scalar(m + std::log(s / static_cast<double>(A.size()))));
    }

    NodeId reshape(NodeId a, Shape shape) {
        return push(Op::Reshape, {a}, value(a).reshaped(std::move(shape)));
    }

    // ---- reverse pass ----------------------------------------------------

    void backward(NodeId loss) {
        Node& root = nodes_.at(loss);
        if (root.value.size() != 1) {
            throw ContractError("backward: loss must be scalar, got shape " + shape_string(root.value.shape()));
        }
        for (Node& n : nodes_) {
            if (n.needs_grad) {
                if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
                    n.grad = Tensor(n.value.shape());
                } else {
                    n.grad.fill(0.0);
                }
            }
        }
        grads_ready_ = true;
        if (!root.needs_grad) {
            return;
        }
        root.grad.fill(1.0);
        for (NodeId id = loss + 1; id-- > 0;) {
            if (nodes_[id].needs_grad && !nodes_[id].inputs.empty()) {
                propagate(id);
            }
        }
    }

private:
    struct Node {
        Op op;
        std::vector<NodeId> inputs;
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        double scalar = 0.0;
        std::vector<std::size_t> indices;
    };

    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    static Eigen::Map<RowMatrix> map(Tensor& t) {
        return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
    }
    static Eigen::Map<const RowMatrix> cmap(const Tensor& t) {
        return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
    }

    NodeId push(Op op, std::vector<NodeId> inputs, Tensor value, bool leaf_grad = false) {
        bool needs = leaf_grad;
        for (NodeId in : inputs) {
            needs = needs || nodes_[in].needs_grad;
        }
        if (check_finite_ && !value.all_finite()) {
            throw NumericError("non-finite value produced by op " + std::to_string(static_cast<int>(op)));
        }
        nodes_.push_back(Node{op, std::move(inputs), std::move(value), Tensor(), needs, 0.0, {}});
        grads_ready_ = false;
        return nodes_.size() - 1;
    }

    enum class Broadcast { Same, Row, Scalar };

    Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* name) const {
        if (a.shape() == b.shape() || (a.size() == b.size() && a.rows() == b.rows())) {
            return Broadcast::Same;
        }
        if (b.size() == 1) {
            return Broadcast::Scalar;
        }
        if (b.rows() == 1 && b.cols() == a.cols()) {
            return Broadcast::Row;
        }
        throw DimensionError(std::string(name) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }

    template <class F>
    NodeId binary(Op op, NodeId a, NodeId b, F f) {
        static constexpr const char* kNames[] = {"add", "sub", "mul", "div"};
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        const Broadcast kind = broadcast_kind(A, B, kNames[static_cast<int>(op) - static_cast<int>(Op::Add)]);
        Tensor out(A.shape());
        const std::size_t cols = A.cols();
        auto o = out.data();
        auto x = A.data();
        auto y = B.data();
        for (std::size_t i = 0; i < o.size(); ++i) {
            const double yv = kind == Broadcast::Same ? y[i] : (kind == Broadcast::Scalar ? y[0] : y[i % cols]);
            o[i] = f(x[i], yv);
        }
        return push(op, {a, b}, std::move(out));
    }

    template <class F>
    NodeId unary(Op op, NodeId a, F f) {
        Tensor out = value(a);
        for (double& v : out.data()) {
            v = f(v);
        }
        return push(op, {a}, std::move(out));
    }

    // Accumulate `g` (shaped like the output of a broadcast op) into input b's gradient.
    void accumulate_broadcast(Node& in, Broadcast kind, std::size_t cols, std::size_t i, double g) {
        auto gi = in.grad.data();
        if (kind == Broadcast::Same) {
            gi[i] += g;
        } else if (kind == Broadcast::Scalar) {
            gi[0] += g;
        } else {
            gi[i % cols] += g;
        }
    }

    void propagate(NodeId id) {
        Node& n = nodes_[id];
        const auto g = n.grad.data();
        switch (n.op) {
        case Op::Constant:
        case Op::Parameter:
            break;
        case Op::Matmul: {
            Node& a = nodes_[n.inputs[0]];
            Node& b = nodes_[n.inputs[1]];
            if (a.needs_grad) {
                map(a.grad).noalias() += cmap(n.grad) * cmap(b.value).transpose();
            }
            if (b.needs_grad) {
                map(b.grad).noalias() += cmap(a.value).transpose() * cmap(n.grad);
            }
            break;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            Node& a = nodes_[n.inputs[0]];
            Node& b = nodes_[n.inputs[1]];
            const Broadcast kind = broadcast_kind(a.value, b.value, "backward");
            const std::size_t cols = a.value.cols();
            const auto x = a.value.data();
            const auto y = b.value.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t j = kind == Broadcast::Same ? i : (kind == Broadcast::Scalar ? 0 : i % cols);
                double da = 0.0;
                double db = 0.0;
                switch (n.op) {
                case Op::Add: da = g[i]; db = g[i]; break;
                case Op::Sub: da = g[i]; db = -g[i]; break;
                case Op::Mul: da = g[i] * y[j]; db = g[i] * x[i]; break;
                default: da = g[i] / y[j]; db = -g[i] * x[i] / (y[j] * y[j]); break;
                }
                if (a.needs_grad) {
                    a.grad.data()[i] += da;
                }
                if (b.needs_grad) {
                    accumulate_broadcast(b, kind, cols, i, db);
                }
            }
            break;
        }
        case Op::Scale: {
            Node& a = nodes_[n.inputs[0]];
            auto ga = a.grad.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * n.scalar;
            }
            break;
        }
        case Op::Tanh:
        case Op::Relu:
        case Op::Exp:
        case Op::Log: {
            Node& a = nodes_[n.inputs[0]];
            auto ga = a.grad.data();
            const auto x = a.value.data();
            const auto y = n.value.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                double d = 0.0;
                switch (n.op) {
                case Op::Tanh: d = 1.0 - y[i] * y[i]; break;
                case Op::Relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
                case Op::Exp: d = y[i]; break;
                default: d = 1.0 / x[i]; break;
                }
                ga[i] += g[i] * d;
            }
            break;
        }
        case Op::Mean:
        case Op::Sum: {
            Node& a = nodes_[n.inputs[0]];
            const double d = n.op == Op::Mean ? g[0] / static_cast<double>(a.value.size()) : g[0];
            for (double& v : a.grad.data()) {
                v += d;
            }
            break;
        }
        case Op::Concat: {
            const std::size_t rows = n.value.rows();
            const std::size_t cols = n.value.cols();
            std::size_t offset = 0;
            for (NodeId in : n.inputs) {
                Node& a = nodes_[in];
                const std::size_t w = a.value.cols();
                if (a.needs_grad) {
                    auto ga = a.grad.data();
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < w; ++c) {
                            ga[r * w + c] += g[r * cols + offset + c];
                        }
                    }
                }
                offset += w;
            }
            break;
        }
        case Op::GatherRows: {
            Node& a = nodes_[n.inputs[0]];
            auto ga = a.grad.data();
            const std::size_t w = a.value.cols();
            for (std::size_t i = 0; i < n.indices.size(); ++i) {
                const std::size_t src = n.indices[i] * w;
                for (std::size_t c = 0; c < w; ++c) {
                    ga[src + c] += g[i * w + c];
                }
            }
            break;
        }
        case Op::L1Norm: {
            Node& a = nodes_[n.inputs[0]];
            auto ga = a.grad.data();
            const auto x = a.value.data();
            for (std::size_t i = 0; i < x.size(); ++i) {
                ga[i] += g[0] * static_cast<double>((x[i] > 0.0) - (x[i] < 0.0));
            }
            break;
        }
        case Op::L2Norm: {
            Node& a = nodes_[n.inputs[0]];
            const double norm = n.value[0];
            if (norm == 0.0) {
                break; // subgradient 0 at the origin
            }
            auto ga = a.grad.data();
            const auto x = a.value.data();
            for (std::size_t i = 0; i < x.size(); ++i) {
                ga[i] += g[0] * x[i] / norm;
            }
            break;
        }
        case Op::LogMeanExp: {
            Node& a = nodes_[n.inputs[0]];
            auto ga = a.grad.data();
            const auto x = a.value.data();
            const double lme = n.value[0];
            const double inv_n = 1.0 / static_cast<double>(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) {
                ga[i] += g[0] * std::exp(x[i] - lme) * inv_n;
            }
            break;
        }
        case Op::Reshape: {
            Node& a = nodes_[n.inputs[0]];
            auto ga = a.grad.data();
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
            }
            break;
        }
        }
    }

    std::vector<Node> nodes_;
    bool check_finite_;
    bool grads_ready_ = false;
};

} // namespace minerva::ndgrad
