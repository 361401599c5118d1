#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// Tensors are immutable values; operations executed while a Tape is active
// (via TapeScope) record backward rules on that tape. Tape::backward replays
// the record in reverse and returns gradients for every watched leaf.
// Non-finite values are rejected at every operation boundary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace greeneyes {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_to_string(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

class Tape;

class Tensor {
public:
    Tensor() : data_(std::make_shared<std::vector<double>>()) {}

    // Primary constructor; validates shape/length agreement and finiteness.
    static Tensor create(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape) {
        std::vector<double> v(shape_numel(shape), 0.0);
        return create(std::move(shape), std::move(v));
    }

    static Tensor full(Shape shape, double value) {
        std::vector<double> v(shape_numel(shape), value);
        return create(std::move(shape), std::move(v));
    }

    static Tensor scalar(double value) { return create({1}, {value}); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_->size(); }
    const std::vector<double>& data() const { return *data_; }

    std::size_t extent(std::size_t axis) const {
        if (axis >= shape_.size()) throw std::invalid_argument("Tensor::extent: axis out of range");
        return shape_[axis];
    }

    double operator[](std::size_t flat) const { return (*data_)[flat]; }

    double at(std::size_t r, std::size_t c) const {
        if (rank() != 2) throw std::invalid_argument("Tensor::at(r,c) requires rank 2");
        return (*data_)[r * shape_[1] + c];
    }

    bool is_scalar() const { return size() == 1; }

    double item() const {
        if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not a scalar");
        return (*data_)[0];
    }

    bool requires_grad() const { return requires_grad_; }
    int node() const { return node_; }
    std::uint64_t tape_id() const { return tape_id_; }

    // Shared immutable storage; backward rules capture this to avoid copies.
    std::shared_ptr<const std::vector<double>> shared_data() const { return data_; }

private:
    friend class Tape;

    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    bool requires_grad_ = false;
    int node_ = -1;           // node index on the tape identified by tape_id_
    std::uint64_t tape_id_ = 0;
};

// Gradient buffers addressed by node id; backward rules accumulate into them.
class GradientSink {
public:
    explicit GradientSink(const std::vector<std::size_t>& sizes) : bufs_(sizes.size()), sizes_(sizes) {}

    bool has(int node) const { return node >= 0 && !bufs_[static_cast<std::size_t>(node)].empty(); }

    std::vector<double>& of(int node) {
        auto& b = bufs_[static_cast<std::size_t>(node)];
        if (b.empty()) b.assign(sizes_[static_cast<std::size_t>(node)], 0.0);
        return b;
    }

    const std::vector<double>& peek(int node) const { return bufs_[static_cast<std::size_t>(node)]; }

private:
    std::vector<std::vector<double>> bufs_;
    const std::vector<std::size_t>& sizes_;
};

using BackwardFn = std::function<void(const std::vector<double>& grad_out, GradientSink& sink)>;

// Gradients of a loss with respect to the watched leaves of one tape.
class Gradients {
public:
    const Tensor& at(const Tensor& leaf) const {
        if (leaf.tape_id() != tape_id_ || leaf.node() < 0)
            throw std::invalid_argument("Gradients::at: tensor was not watched on this tape");
        auto it = by_node_.find(leaf.node());
        if (it == by_node_.end())
            throw std::invalid_argument("Gradients::at: tensor is not a leaf of this tape");
        return it->second;
    }

    std::size_t leaf_count() const { return by_node_.size(); }

private:
    friend class Tape;
    std::uint64_t tape_id_ = 0;
    std::unordered_map<int, Tensor> by_node_;
};

class Tape {
public:
    Tape() : id_(next_id()++) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t id() const { return id_; }

    // Registers t as a differentiable leaf of this tape. Idempotent per tensor value.
    void watch(Tensor& t) {
        const void* key = t.data_.get();
        auto it = watched_.find(key);
        if (it != watched_.end()) {
            t.node_ = it->second;
            t.tape_id_ = id_;
            t.requires_grad_ = true;
            return;
        }
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{{}, t.shape(), t.size(), nullptr, true});
        watched_.emplace(key, id);
        t.node_ = id;
        t.tape_id_ = id_;
        t.requires_grad_ = true;
    }

    // Records an operation node. `inputs` are node ids of participating inputs
    // (callers pass only ids valid on this tape).
    int record(std::vector<int> inputs, Shape out_shape, BackwardFn backward) {
        for (int in : inputs) {
            if (in < 0 || in >= static_cast<int>(nodes_.size()))
                throw std::logic_error("Tape::record: input node not on this tape");
        }
        int id = static_cast<int>(nodes_.size());
        std::size_t n = shape_numel(out_shape);
        nodes_.push_back(Node{std::move(inputs), std::move(out_shape), n, std::move(backward), false});
        return id;
    }

    std::size_t node_count() const { return nodes_.size(); }

    // Reverse sweep from a scalar loss. Every watched leaf gets a gradient
    // entry; leaves unreachable from the loss get zeros.
    Gradients backward(const Tensor& loss) const {
        if (!loss.is_scalar())
            throw std::invalid_argument("Tape::backward: loss must be a scalar");
        if (loss.tape_id_ != id_ || loss.node_ < 0)
            throw std::invalid_argument("Tape::backward: loss is not recorded on this tape");

        std::vector<std::size_t> sizes(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i) sizes[i] = nodes_[i].size;
        GradientSink sink(sizes);
        sink.of(loss.node_)[0] = 1.0;

        for (int id = loss.node_; id >= 0; --id) {
            const Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!sink.has(id) || !n.backward) continue;
            n.backward(sink.peek(id), sink);
        }

        Gradients out;
        out.tape_id_ = id_;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (!nodes_[i].is_leaf) continue;
            std::vector<double> g = sink.has(static_cast<int>(i))
                                        ? sink.peek(static_cast<int>(i))
                                        : std::vector<double>(nodes_[i].size, 0.0);
            out.by_node_.emplace(static_cast<int>(i), Tensor::create(nodes_[i].shape, std::move(g)));
        }
        return out;
    }

    static Tape* active() { return active_tape(); }

    // Used by operations to attach their output to the active tape.
    static void track(Tensor& t, int node) {
        t.node_ = node;
        t.tape_id_ = active()->id_;
        t.requires_grad_ = true;
    }

    static bool tracked_here(const Tensor& t) {
        Tape* tp = active();
        return tp != nullptr && t.tape_id() == tp->id() && t.node() >= 0;
    }

private:
    friend class TapeScope;

    struct Node {
        std::vector<int> inputs;
        Shape shape;
        std::size_t size;
        BackwardFn backward;  // null for leaves
        bool is_leaf;
    };

    static std::uint64_t& next_id() {
        static std::uint64_t counter = 1;
        return counter;
    }

    static Tape*& active_tape() {
        thread_local Tape* current = nullptr;
        return current;
    }

    std::uint64_t id_;
    std::vector<Node> nodes_;
    std::unordered_map<const void*, int> watched_;
};

// Activates a tape for the current scope (one logical execution context).
class TapeScope {
public:
    explicit TapeScope(Tape& t) : prev_(Tape::active_tape()) { Tape::active_tape() = &t; }
    ~TapeScope() { Tape::active_tape() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

namespace detail {

// Attaches `out` to the active tape when any input is tracked there.
inline Tensor attach(Tensor out, std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
    Tape* tape = Tape::active();
    if (!tape) return out;
    std::vector<int> in_nodes;
    for (const Tensor* t : inputs) {
        if (Tape::tracked_here(*t)) in_nodes.push_back(t->node());
    }
    if (in_nodes.empty()) return out;
    int id = tape->record(std::move(in_nodes), out.shape(), std::move(backward));
    Tape::track(out, id);
    return out;
}

// Builds the result tensor (validating finiteness) and attaches it.
inline Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                          std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
    for (double v : values) {
        if (!std::isfinite(v)) throw std::runtime_error(std::string(op) + ": non-finite value produced");
    }
    return attach(Tensor::create(std::move(shape), std::move(values)), inputs, std::move(backward));
}

}  // namespace detail

inline Tensor Tensor::create(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        std::ostringstream os;
        os << "Tensor::create: shape " << shape_to_string(shape) << " expects " << shape_numel(shape)
           << " values, got " << values.size();
        throw std::invalid_argument(os.str());
    }
    for (std::size_t e : shape) {
        if (e == 0) throw std::invalid_argument("Tensor::create: zero extent in shape");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("Tensor::create: non-finite input value");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
    t.requires_grad_ = requires_grad;
    if (requires_grad) {
        if (Tape* tape = Tape::active()) tape->watch(t);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Elementwise unary operations
// ---------------------------------------------------------------------------

enum class UnaryKind { Tanh, Sigmoid, Exp, Relu, Neg };

namespace detail {

inline double sigmoid_val(double x) {
    // split on sign to avoid exp overflow for large |x|
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace detail

inline Tensor tanh(const Tensor& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    Tensor out = Tensor::create(x.shape(), std::move(y));
    auto yv = out.shared_data();  // derivative is 1 - tanh^2
    return detail::attach(std::move(out), {&x},
                          [xn = x.node(), yv](const std::vector<double>& g, GradientSink& sink) {
                              auto& gx = sink.of(xn);
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  gx[i] += g[i] * (1.0 - (*yv)[i] * (*yv)[i]);
                          });
}

inline Tensor sigmoid(const Tensor& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = detail::sigmoid_val(x[i]);
    Tensor out = Tensor::create(x.shape(), std::move(y));
    auto yv = out.shared_data();
    return detail::attach(std::move(out), {&x},
                          [xn = x.node(), yv](const std::vector<double>& g, GradientSink& sink) {
                              auto& gx = sink.of(xn);
                              for (std::size_t i = 0; i < g.size(); ++i)
                                  gx[i] += g[i] * (*yv)[i] * (1.0 - (*yv)[i]);
                          });
}

inline Tensor exp(const Tensor& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i]);
        if (!std::isfinite(y[i])) throw std::runtime_error("exp: overflow beyond double range");
    }
    Tensor out = Tensor::create(x.shape(), std::move(y));
    auto yv = out.shared_data();
    return detail::attach(std::move(out), {&x},
                          [xn = x.node(), yv](const std::vector<double>& g, GradientSink& sink) {
                              auto& gx = sink.of(xn);
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*yv)[i];
                          });
}

inline Tensor relu(const Tensor& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    auto xv = x.shared_data();
    return detail::make_result(
        x.shape(), std::move(y), "relu", {&x},
        [xn = x.node(), xv](const std::vector<double>& g, GradientSink& sink) {
            auto& gx = sink.of(xn);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += (*xv)[i] > 0.0 ? g[i] : 0.0;
        });
}

inline Tensor neg(const Tensor& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = -x[i];
    return detail::make_result(x.shape(), std::move(y), "neg", {&x},
                               [xn = x.node()](const std::vector<double>& g, GradientSink& sink) {
                                   auto& gx = sink.of(xn);
                                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
                               });
}

inline Tensor unary_map(UnaryKind kind, const Tensor& x) {
    switch (kind) {
        case UnaryKind::Tanh: return tanh(x);
        case UnaryKind::Sigmoid: return sigmoid(x);
        case UnaryKind::Exp: return exp(x);
        case UnaryKind::Relu: return relu(x);
        case UnaryKind::Neg: return neg(x);
    }
    throw std::invalid_argument("unary_map: unknown kind");
}

// ---------------------------------------------------------------------------
// Elementwise binary operations with limited broadcasting
// ---------------------------------------------------------------------------
//
// Supported operand shape combinations:
//   - identical shapes (pure elementwise)
//   - one operand is a single-element scalar
//   - rank-1 vector of length C against a rank-2 (T x C) matrix (per-channel)

enum class BinaryKind { Add, Sub, Mul, Div };

namespace detail {

enum class Broadcast { None, ScalarLeft, ScalarRight, RowVecLeft, RowVecRight };

inline Broadcast classify_broadcast(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::None;
    if (a.size() == 1) return Broadcast::ScalarLeft;
    if (b.size() == 1) return Broadcast::ScalarRight;
    if (a.rank() == 1 && b.rank() == 2 && a.extent(0) == b.extent(1)) return Broadcast::RowVecLeft;
    if (b.rank() == 1 && a.rank() == 2 && b.extent(0) == a.extent(1)) return Broadcast::RowVecRight;
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_to_string(a.shape()) +
                                " and " + shape_to_string(b.shape()));
}

// Reduces an output-shaped gradient onto a broadcast operand's own shape.
inline void fold_grad(const std::vector<double>& g, std::vector<double>& dst, Broadcast mode, bool left,
                      std::size_t cols) {
    bool is_scalar = (mode == Broadcast::ScalarLeft && left) || (mode == Broadcast::ScalarRight && !left);
    bool is_rowvec = (mode == Broadcast::RowVecLeft && left) || (mode == Broadcast::RowVecRight && !left);
    if (is_scalar) {
        double s = 0.0;
        for (double v : g) s += v;
        dst[0] += s;
    } else if (is_rowvec) {
        for (std::size_t i = 0; i < g.size(); ++i) dst[i % cols] += g[i];
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
}

}  // namespace detail

inline Tensor binary_op(BinaryKind kind, const Tensor& a, const Tensor& b) {
    const char* name = kind == BinaryKind::Add   ? "add"
                       : kind == BinaryKind::Sub ? "sub"
                       : kind == BinaryKind::Mul ? "mul"
                                                 : "div";
    detail::Broadcast mode = detail::classify_broadcast(a, b, name);

    const Tensor& big = (mode == detail::Broadcast::ScalarLeft || mode == detail::Broadcast::RowVecLeft) ? b : a;
    Shape out_shape = big.shape();
    std::size_t n = big.size();
    std::size_t cols = out_shape.size() == 2 ? out_shape[1] : out_shape.empty() ? 1 : out_shape[0];

    auto index = [&](const Tensor& t, std::size_t i) -> double {
        if (t.size() == n) return t[i];
        if (t.size() == 1) return t[0];
        return t[i % cols];  // row-vector broadcast over a (T x C) matrix
    };

    std::vector<double> y(n);
    if (kind == BinaryKind::Div) {
        for (std::size_t i = 0; i < n; ++i) {
            double denom = index(b, i);
            if (denom == 0.0) throw std::runtime_error("div: division by zero");
            y[i] = index(a, i) / denom;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double av = index(a, i), bv = index(b, i);
            y[i] = kind == BinaryKind::Add ? av + bv : kind == BinaryKind::Sub ? av - bv : av * bv;
        }
    }

    auto av = a.shared_data();
    auto bv = b.shared_data();
    std::size_t asz = a.size(), bsz = b.size();

    BackwardFn backward = [kind, mode, cols, n, asz, bsz, av, bv, an = a.node(), bn = b.node(),
                           a_tracked = Tape::tracked_here(a), b_tracked = Tape::tracked_here(b)](
                              const std::vector<double>& g, GradientSink& sink) {
        auto pick = [cols](const std::vector<double>& v, std::size_t sz, std::size_t i, std::size_t total) {
            if (sz == total) return v[i];
            if (sz == 1) return v[0];
            return v[i % cols];
        };
        std::vector<double> ga_full, gb_full;
        if (a_tracked) ga_full.assign(n, 0.0);
        if (b_tracked) gb_full.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double da = 0.0, db = 0.0;
            switch (kind) {
                case BinaryKind::Add: da = g[i]; db = g[i]; break;
                case BinaryKind::Sub: da = g[i]; db = -g[i]; break;
                case BinaryKind::Mul:
                    da = g[i] * pick(*bv, bsz, i, n);
                    db = g[i] * pick(*av, asz, i, n);
                    break;
                case BinaryKind::Div: {
                    double bi = pick(*bv, bsz, i, n);
                    da = g[i] / bi;
                    db = -g[i] * pick(*av, asz, i, n) / (bi * bi);
                    break;
                }
            }
            if (a_tracked) ga_full[i] = da;
            if (b_tracked) gb_full[i] = db;
        }
        if (a_tracked) detail::fold_grad(ga_full, sink.of(an), mode, true, cols);
        if (b_tracked) detail::fold_grad(gb_full, sink.of(bn), mode, false, cols);
    };

    return detail::make_result(std::move(out_shape), std::move(y), name, {&a, &b}, std::move(backward));
}

inline Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return binary_op(BinaryKind::Div, a, b); }

// ---------------------------------------------------------------------------
// Matrix product
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw std::invalid_argument("matmul: both operands must be rank 2");
    std::size_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
    if (k != k2)
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_to_string(a.shape()) + " * " +
                                    shape_to_string(b.shape()));

    std::vector<double> y(m * n, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double aip = ad[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bd.data() + p * n;
            double* yrow = y.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) yrow[j] += aip * brow[j];
        }
    }

    BackwardFn backward = [m, k, n, ap = a.shared_data(), bp = b.shared_data(), an = a.node(), bn = b.node(),
                           a_tracked = Tape::tracked_here(a), b_tracked = Tape::tracked_here(b)](
                              const std::vector<double>& g, GradientSink& sink) {
        const auto& ad = *ap;
        const auto& bd = *bp;
        if (a_tracked) {
            auto& ga = sink.of(an);  // dA = G * B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bd[p * n + j];
                    ga[i * k + p] += s;
                }
        }
        if (b_tracked) {
            auto& gb = sink.of(bn);  // dB = A^T * G
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t i = 0; i < m; ++i) {
                    double aip = ad[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                }
        }
    };

    return detail::make_result({m, n}, std::move(y), "matmul", {&a, &b}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class ReduceKind { Sum, Mean, Max };

inline Tensor reduce(ReduceKind kind, const Tensor& x, std::optional<std::size_t> axis = std::nullopt) {
    if (x.size() == 0) throw std::invalid_argument("reduce: empty tensor");
    if (axis && *axis >= x.rank()) throw std::invalid_argument("reduce: axis out of range");

    // (rows, cols) view: full reduce treats the tensor as one row; an axis
    // reduce on rank-2 folds either rows (axis 0) or columns (axis 1).
    std::size_t rows, cols;
    bool along_cols;  // reduce consumes the column index
    if (!axis || x.rank() == 1) {
        rows = 1;
        cols = x.size();
        along_cols = true;
    } else {
        rows = x.extent(0);
        cols = x.extent(1);
        along_cols = (*axis == 1);
    }

    std::size_t out_n = along_cols ? rows : cols;
    std::size_t group = along_cols ? cols : rows;
    std::vector<double> y(out_n);
    std::vector<std::size_t> argmax(kind == ReduceKind::Max ? out_n : 0);

    for (std::size_t o = 0; o < out_n; ++o) {
        auto elem = [&](std::size_t j) { return along_cols ? x[o * cols + j] : x[j * cols + o]; };
        if (kind == ReduceKind::Max) {
            double best = elem(0);
            std::size_t bi = 0;
            for (std::size_t j = 1; j < group; ++j) {
                if (elem(j) > best) { best = elem(j); bi = j; }  // first max wins ties
            }
            y[o] = best;
            argmax[o] = bi;
        } else {
            double s = 0.0;
            for (std::size_t j = 0; j < group; ++j) s += elem(j);
            y[o] = kind == ReduceKind::Mean ? s / static_cast<double>(group) : s;
        }
    }

    Shape out_shape = (!axis || x.rank() == 1) ? Shape{1} : Shape{out_n};

    BackwardFn backward = [kind, rows, cols, along_cols, group, argmax, xn = x.node()](
                              const std::vector<double>& g, GradientSink& sink) {
        auto& gx = sink.of(xn);
        std::size_t out_n = along_cols ? rows : cols;
        for (std::size_t o = 0; o < out_n; ++o) {
            auto flat = [&](std::size_t j) { return along_cols ? o * cols + j : j * cols + o; };
            switch (kind) {
                case ReduceKind::Sum:
                    for (std::size_t j = 0; j < group; ++j) gx[flat(j)] += g[o];
                    break;
                case ReduceKind::Mean:
                    for (std::size_t j = 0; j < group; ++j) gx[flat(j)] += g[o] / static_cast<double>(group);
                    break;
                case ReduceKind::Max:
                    gx[flat(argmax[o])] += g[o];
                    break;
            }
        }
    };

    return detail::make_result(std::move(out_shape), std::move(y), "reduce", {&x}, std::move(backward));
}

inline Tensor reduce_sum(const Tensor& x, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceKind::Sum, x, axis);
}
inline Tensor reduce_mean(const Tensor& x, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceKind::Mean, x, axis);
}
inline Tensor reduce_max(const Tensor& x, std::optional<std::size_t> axis = std::nullopt) {
    return reduce(ReduceKind::Max, x, axis);
}

// ---------------------------------------------------------------------------
// Softmax (max-subtracted for stability; sums to 1 along the axis)
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");

    std::size_t rows, cols;
    bool along_cols;
    if (x.rank() == 1) {
        rows = 1;
        cols = x.size();
        along_cols = true;
    } else if (x.rank() == 2) {
        rows = x.extent(0);
        cols = x.extent(1);
        along_cols = (axis == 1);
    } else {
        throw std::invalid_argument("softmax: rank > 2 not supported");
    }

    std::size_t groups = along_cols ? rows : cols;
    std::size_t group_len = along_cols ? cols : rows;
    std::vector<double> y(x.size());

    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        auto flat = [&](std::size_t j) { return along_cols ? gidx * cols + j : j * cols + gidx; };
        double mx = x[flat(0)];
        for (std::size_t j = 1; j < group_len; ++j) mx = std::max(mx, x[flat(j)]);
        double sum = 0.0;
        for (std::size_t j = 0; j < group_len; ++j) {
            double e = std::exp(x[flat(j)] - mx);
            y[flat(j)] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < group_len; ++j) y[flat(j)] /= sum;
    }

    Tensor out = Tensor::create(x.shape(), std::move(y));
    auto yv = out.shared_data();
    BackwardFn backward = [cols, along_cols, groups, group_len, yv, xn = x.node()](
                              const std::vector<double>& g, GradientSink& sink) {
        auto& gx = sink.of(xn);
        for (std::size_t gidx = 0; gidx < groups; ++gidx) {
            auto flat = [&](std::size_t j) { return along_cols ? gidx * cols + j : j * cols + gidx; };
            double dot = 0.0;
            for (std::size_t j = 0; j < group_len; ++j) dot += g[flat(j)] * (*yv)[flat(j)];
            for (std::size_t j = 0; j < group_len; ++j)
                gx[flat(j)] += (*yv)[flat(j)] * (g[flat(j)] - dot);
        }
    };

    return detail::attach(std::move(out), {&x}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Structural operations (no arithmetic; gradients are permutations/embeddings)
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw std::invalid_argument("reshape: element count mismatch for " + shape_to_string(shape));
    std::vector<double> y = x.data();
    return detail::make_result(std::move(shape), std::move(y), "reshape", {&x},
                               [xn = x.node()](const std::vector<double>& g, GradientSink& sink) {
                                   auto& gx = sink.of(xn);
                                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                               });
}

inline Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
    std::size_t r = x.extent(0), c = x.extent(1);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
    return detail::make_result({c, r}, std::move(y), "transpose", {&x},
                               [r, c, xn = x.node()](const std::vector<double>& g, GradientSink& sink) {
                                   auto& gx = sink.of(xn);
                                   for (std::size_t i = 0; i < r; ++i)
                                       for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
                               });
}

// Concatenation of two rank-1 vectors.
inline Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) throw std::invalid_argument("concat: rank-1 tensors required");
    std::vector<double> y;
    y.reserve(a.size() + b.size());
    y.insert(y.end(), a.data().begin(), a.data().end());
    y.insert(y.end(), b.data().begin(), b.data().end());
    std::size_t na = a.size();
    BackwardFn backward = [na, an = a.node(), bn = b.node(), a_tracked = Tape::tracked_here(a),
                           b_tracked = Tape::tracked_here(b)](const std::vector<double>& g, GradientSink& sink) {
        if (a_tracked) {
            auto& ga = sink.of(an);
            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        }
        if (b_tracked) {
            auto& gb = sink.of(bn);
            for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
        }
    };
    return detail::make_result({a.size() + b.size()}, std::move(y), "concat", {&a, &b}, std::move(backward));
}

// Extracts row r of a rank-2 tensor as a rank-1 vector.
inline Tensor take_row(const Tensor& x, std::size_t r) {
    if (x.rank() != 2) throw std::invalid_argument("take_row: rank-2 tensor required");
    if (r >= x.extent(0)) throw std::invalid_argument("take_row: row out of range");
    std::size_t c = x.extent(1);
    std::vector<double> y(x.data().begin() + r * c, x.data().begin() + (r + 1) * c);
    return detail::make_result({c}, std::move(y), "take_row", {&x},
                               [r, c, xn = x.node()](const std::vector<double>& g, GradientSink& sink) {
                                   auto& gx = sink.of(xn);
                                   for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[j];
                               });
}

// Reverses a rank-2 tensor along its first (time) axis.
inline Tensor reverse_time(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("reverse_time: rank-2 tensor required");
    std::size_t t = x.extent(0), c = x.extent(1);
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < c; ++j) y[(t - 1 - i) * c + j] = x[i * c + j];
    return detail::make_result(x.shape(), std::move(y), "reverse_time", {&x},
                               [t, c, xn = x.node()](const std::vector<double>& g, GradientSink& sink) {
                                   auto& gx = sink.of(xn);
                                   for (std::size_t i = 0; i < t; ++i)
                                       for (std::size_t j = 0; j < c; ++j)
                                           gx[i * c + j] += g[(t - 1 - i) * c + j];
                               });
}

// Multiplies row t of a (T x F) tensor by w[t]. `w` is rank-1 of length T
// (or T x 1); used to weight timesteps.
inline Tensor scale_rows(const Tensor& x, const Tensor& w) {
    if (x.rank() != 2) throw std::invalid_argument("scale_rows: x must be rank 2");
    std::size_t t = x.extent(0), f = x.extent(1);
    if (w.size() != t) throw std::invalid_argument("scale_rows: weight length must equal row count");
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < f; ++j) y[i * f + j] = x[i * f + j] * w[i];

    BackwardFn backward = [t, f, xv = x.shared_data(), wv = w.shared_data(), xn = x.node(), wn = w.node(),
                           x_tracked = Tape::tracked_here(x), w_tracked = Tape::tracked_here(w)](
                              const std::vector<double>& g, GradientSink& sink) {
        if (x_tracked) {
            auto& gx = sink.of(xn);
            for (std::size_t i = 0; i < t; ++i)
                for (std::size_t j = 0; j < f; ++j) gx[i * f + j] += g[i * f + j] * (*wv)[i];
        }
        if (w_tracked) {
            auto& gw = sink.of(wn);
            for (std::size_t i = 0; i < t; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < f; ++j) s += g[i * f + j] * (*xv)[i * f + j];
                gw[i] += s;
            }
        }
    };
    return detail::make_result(x.shape(), std::move(y), "scale_rows", {&x, &w}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Gradient checking against central finite differences
// ---------------------------------------------------------------------------

// Compares the tape gradient of f at x against (f(x+eps*e_i) - f(x-eps*e_i)) / 2eps
// per coordinate. Relative error denominator is max(|analytic|, |numeric|, 1e-8).
// Returns the maximum relative error; callers assert on it.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5) {
    Tape tape;
    Tensor xt = Tensor::create(x.shape(), x.data());
    std::vector<double> analytic;
    {
        TapeScope scope(tape);
        tape.watch(xt);
        Tensor loss = f(xt);
        if (!loss.is_scalar()) throw std::invalid_argument("grad_check: f must return a scalar");
        Gradients grads = tape.backward(loss);
        analytic = grads.at(xt).data();
    }

    double max_rel = 0.0;
    std::vector<double> base = x.data();
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> vp = base, vm = base;
        vp[i] += eps;
        vm[i] -= eps;
        double fp = f(Tensor::create(x.shape(), std::move(vp))).item();
        double fm = f(Tensor::create(x.shape(), std::move(vm))).item();
        double numeric = (fp - fm) / (2.0 * eps);
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

}  // namespace greeneyes
