#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "traitmix/error.hpp"

namespace traitmix {

using Shape = std::vector<size_t>;

inline size_t numel(const Shape& shape) {
    size_t n = 1;
    for (size_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

class Tape;

// Lightweight handle into a tape node. Valid for the lifetime of its tape.
class Tensor {
public:
    Tensor() = default;

    const Shape& shape() const;
    const std::vector<double>& values() const;
    const std::vector<double>& grad() const;
    bool requires_grad() const;
    size_t size() const;
    double scalar() const;
    double at(size_t i) const;
    Tape& tape() const { return *tape_; }
    uint32_t index() const { return index_; }

private:
    friend class Tape;
    Tensor(Tape* tape, uint32_t index) : tape_(tape), index_(index) {}
    Tape* tape_ = nullptr;
    uint32_t index_ = 0;
};

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order by construction; backward() walks it once in reverse.
// A tape is single-use: one forward graph, at most one backward pass.
class Tape {
public:
    Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = true) {
        return emplace(std::move(shape), std::move(values), requires_grad);
    }

    Tensor constant(Shape shape, std::vector<double> values) {
        return emplace(std::move(shape), std::move(values), false);
    }

    Tensor scalar_leaf(double v, bool requires_grad = true) { return leaf({1}, {v}, requires_grad); }

    Tensor emplace(Shape shape, std::vector<double> values, bool requires_grad) {
        if (backward_done_)
            fail(ErrorKind::state, "tensor", "tape already consumed by backward; build a fresh tape");
        if (numel(shape) != values.size())
            fail(ErrorKind::shape, "tensor", "shape " + shape_str(shape) + " does not match value count " +
                                                 std::to_string(values.size()));
        Node node;
        node.shape = std::move(shape);
        node.grad.assign(values.size(), 0.0);
        node.values = std::move(values);
        node.requires_grad = requires_grad;
        nodes_.push_back(std::move(node));
        return Tensor(this, static_cast<uint32_t>(nodes_.size() - 1));
    }

    void set_backward(const Tensor& t, std::function<void(Tape&)> fn) {
        nodes_[t.index()].backward = std::move(fn);
    }

    void backward(const Tensor& loss) {
        if (backward_done_)
            fail(ErrorKind::state, "tensor", "backward called twice on the same tape");
        if (&loss.tape() != this)
            fail(ErrorKind::state, "tensor", "loss tensor belongs to another tape");
        if (loss.size() != 1)
            fail(ErrorKind::shape, "tensor", "backward requires a scalar loss, got " + shape_str(loss.shape()));
        backward_done_ = true;
        grad_mut(loss.index())[0] = 1.0;
        for (size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward && n.requires_grad) n.backward(*this);
        }
    }

    bool backward_done() const { return backward_done_; }
    size_t node_count() const { return nodes_.size(); }

    const Shape& shape(uint32_t i) const { return nodes_[i].shape; }
    const std::vector<double>& values(uint32_t i) const { return nodes_[i].values; }
    const std::vector<double>& grad(uint32_t i) const { return nodes_[i].grad; }
    std::vector<double>& grad_mut(uint32_t i) { return nodes_[i].grad; }
    bool requires_grad(uint32_t i) const { return nodes_[i].requires_grad; }

private:
    struct Node {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        bool requires_grad = false;
        std::function<void(Tape&)> backward;
    };
    // deque: references into nodes stay valid while ops keep being appended
    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

inline const Shape& Tensor::shape() const { return tape_->shape(index_); }
inline const std::vector<double>& Tensor::values() const { return tape_->values(index_); }
inline const std::vector<double>& Tensor::grad() const { return tape_->grad(index_); }
inline bool Tensor::requires_grad() const { return tape_->requires_grad(index_); }
inline size_t Tensor::size() const { return values().size(); }
inline double Tensor::at(size_t i) const { return values()[i]; }
inline double Tensor::scalar() const {
    if (size() != 1) fail(ErrorKind::shape, "tensor", "scalar() on tensor of shape " + shape_str(shape()));
    return values()[0];
}

namespace detail {

inline void check_same_tape(const Tensor& a, const Tensor& b) {
    if (&a.tape() != &b.tape())
        fail(ErrorKind::state, "tensor", "operands live on different tapes");
}

// Treats rank-1 [n] as a single row [1, n].
inline std::pair<size_t, size_t> rows_cols(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.size() == 1) return {size_t{1}, s[0]};
    if (s.size() == 2) return {s[0], s[1]};
    fail(ErrorKind::shape, "tensor", "expected rank 1 or 2, got " + shape_str(s));
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise and scalar ops

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_tape(a, b);
    if (a.shape() != b.shape())
        fail(ErrorKind::shape, "tensor", "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tape& t = a.tape();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    const uint32_t ia = a.index(), ib = b.index(), ir = r.index();
    t.set_backward(r, [ia, ib, ir](Tape& tp) {
        const auto& g = tp.grad(ir);
        if (tp.requires_grad(ia)) {
            auto& ga = tp.grad_mut(ia);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.requires_grad(ib)) {
            auto& gb = tp.grad_mut(ib);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
    return r;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_tape(a, b);
    if (a.shape() != b.shape())
        fail(ErrorKind::shape, "tensor", "sub: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tape& t = a.tape();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    const uint32_t ia = a.index(), ib = b.index(), ir = r.index();
    t.set_backward(r, [ia, ib, ir](Tape& tp) {
        const auto& g = tp.grad(ir);
        if (tp.requires_grad(ia)) {
            auto& ga = tp.grad_mut(ia);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (tp.requires_grad(ib)) {
            auto& gb = tp.grad_mut(ib);
            for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
    return r;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_tape(a, b);
    if (a.shape() != b.shape())
        fail(ErrorKind::shape, "tensor", "mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tape& t = a.tape();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
    const uint32_t ia = a.index(), ib = b.index(), ir = r.index();
    t.set_backward(r, [ia, ib, ir](Tape& tp) {
        const auto& g = tp.grad(ir);
        const auto& va = tp.values(ia);
        const auto& vb = tp.values(ib);
        if (tp.requires_grad(ia)) {
            auto& ga = tp.grad_mut(ia);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (tp.requires_grad(ib)) {
            auto& gb = tp.grad_mut(ib);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
    return r;
}

inline Tensor scale(const Tensor& a, double c) {
    Tape& t = a.tape();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir, c](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
    return r;
}

// x * s where s is a scalar tensor; differentiable in both.
inline Tensor scale_by(const Tensor& a, const Tensor& s) {
    detail::check_same_tape(a, s);
    if (s.size() != 1) fail(ErrorKind::shape, "tensor", "scale_by: scalar expected, got " + shape_str(s.shape()));
    Tape& t = a.tape();
    const double sv = s.values()[0];
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * sv;
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad() || s.requires_grad());
    const uint32_t ia = a.index(), is = s.index(), ir = r.index();
    t.set_backward(r, [ia, is, ir](Tape& tp) {
        const auto& g = tp.grad(ir);
        const double sv2 = tp.values(is)[0];
        const auto& va = tp.values(ia);
        if (tp.requires_grad(ia)) {
            auto& ga = tp.grad_mut(ia);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv2;
        }
        if (tp.requires_grad(is)) {
            double acc = 0.0;
            for (size_t i = 0; i < g.size(); ++i) acc += g[i] * va[i];
            tp.grad_mut(is)[0] += acc;
        }
    });
    return r;
}

// Element i of a vector, as a scalar tensor.
inline Tensor pick(const Tensor& v, size_t i) {
    if (i >= v.size()) fail(ErrorKind::shape, "tensor", "pick: index out of range");
    Tape& t = v.tape();
    Tensor r = t.emplace({1}, {v.values()[i]}, v.requires_grad());
    const uint32_t iv = v.index(), ir = r.index();
    t.set_backward(r, [iv, ir, i](Tape& tp) {
        if (tp.requires_grad(iv)) tp.grad_mut(iv)[i] += tp.grad(ir)[0];
    });
    return r;
}

inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        fail(ErrorKind::shape, "tensor", "reshape: size mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    Tape& t = a.tape();
    Tensor r = t.emplace(std::move(shape), a.values(), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    return r;
}

inline Tensor relu(const Tensor& a) {
    Tape& t = a.tape();
    std::vector<double> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        const auto& va = tp.values(ia);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < g.size(); ++i)
            if (va[i] > 0.0) ga[i] += g[i];
    });
    return r;
}

inline Tensor sum(const Tensor& a) {
    Tape& t = a.tape();
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    Tensor r = t.emplace({1}, {acc}, a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const double g = tp.grad(ir)[0];
        auto& ga = tp.grad_mut(ia);
        for (double& x : ga) x += g;
    });
    return r;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

// ---------------------------------------------------------------------------
// linear algebra

inline Tensor transpose(const Tensor& a) {
    const auto [m, n] = detail::rows_cols(a);
    Tape& t = a.tape();
    std::vector<double> out(m * n);
    const auto& va = a.values();
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[j * m + i] = va[i * n + j];
    Tensor r = t.emplace({n, m}, std::move(out), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir, m, n](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
    return r;
}

namespace detail {

// C[m,n] += A[m,k] * B[k,n]; i-k-j order keeps the inner loop contiguous.
inline void matmul_accum(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = b + kk * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

} // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::check_same_tape(a, b);
    const auto [m, ka] = detail::rows_cols(a);
    const auto [kb, n] = detail::rows_cols(b);
    if (ka != kb)
        fail(ErrorKind::shape, "tensor", "matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                                             shape_str(b.shape()));
    const size_t k = ka;
    Tape& t = a.tape();
    std::vector<double> out(m * n, 0.0);
    detail::matmul_accum(a.values().data(), b.values().data(), out.data(), m, k, n);
    Tensor r = t.emplace({m, n}, std::move(out), a.requires_grad() || b.requires_grad());
    const uint32_t ia = a.index(), ib = b.index(), ir = r.index();
    t.set_backward(r, [ia, ib, ir, m, k, n](Tape& tp) {
        const auto& g = tp.grad(ir);
        if (tp.requires_grad(ia)) {
            // dA = g * B^T : dA[i,kk] += dot(g[i,:], B[kk,:])
            auto& ga = tp.grad_mut(ia);
            const auto& vb = tp.values(ib);
            for (size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * n;
                double* garow = ga.data() + i * k;
                for (size_t kk = 0; kk < k; ++kk) {
                    const double* brow = vb.data() + kk * n;
                    double acc = 0.0;
                    for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    garow[kk] += acc;
                }
            }
        }
        if (tp.requires_grad(ib)) {
            // dB = A^T * g : dB[kk,:] += A[i,kk] * g[i,:]
            auto& gb = tp.grad_mut(ib);
            const auto& va = tp.values(ia);
            for (size_t i = 0; i < m; ++i) {
                const double* arow = va.data() + i * k;
                const double* grow = g.data() + i * n;
                for (size_t kk = 0; kk < k; ++kk) {
                    const double av = arow[kk];
                    if (av == 0.0) continue;
                    double* gbrow = gb.data() + kk * n;
                    for (size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
    return r;
}

// ---------------------------------------------------------------------------
// softmax family

namespace detail {

// Row-wise stable softmax into out; when causal, entries j > row_index are
// masked out (probability exactly zero). Rows are length n.
inline void softmax_fill(const double* in, double* out, size_t rows, size_t n, bool causal) {
    for (size_t i = 0; i < rows; ++i) {
        const double* x = in + i * n;
        double* y = out + i * n;
        const size_t limit = causal ? std::min(i + 1, n) : n;
        double mx = -std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < limit; ++j) mx = std::max(mx, x[j]);
        double denom = 0.0;
        for (size_t j = 0; j < limit; ++j) {
            y[j] = std::exp(x[j] - mx);
            denom += y[j];
        }
        for (size_t j = 0; j < limit; ++j) y[j] /= denom;
        for (size_t j = limit; j < n; ++j) y[j] = 0.0;
    }
}

inline Tensor softmax_impl(const Tensor& a, bool causal) {
    const auto [rows, n] = rows_cols(a);
    if (n == 0) fail(ErrorKind::shape, "tensor", "softmax: empty rows");
    Tape& t = a.tape();
    std::vector<double> out(rows * n);
    softmax_fill(a.values().data(), out.data(), rows, n, causal);
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir, rows, n](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        const auto& y = tp.values(ir);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < rows; ++i) {
            const double* grow = g.data() + i * n;
            const double* yrow = y.data() + i * n;
            double dot = 0.0;
            for (size_t j = 0; j < n; ++j) dot += grow[j] * yrow[j];
            double* garow = ga.data() + i * n;
            for (size_t j = 0; j < n; ++j) garow[j] += yrow[j] * (grow[j] - dot);
        }
    });
    return r;
}

} // namespace detail

// Stable row-wise softmax (max subtraction); rows sum to 1.
inline Tensor softmax_rows(const Tensor& a) { return detail::softmax_impl(a, false); }

// Softmax over a square attention score matrix with positions j > i masked out.
inline Tensor causal_softmax_rows(const Tensor& a) {
    const auto [rows, n] = detail::rows_cols(a);
    if (rows != n) fail(ErrorKind::shape, "tensor", "causal_softmax_rows expects a square matrix");
    return detail::softmax_impl(a, true);
}

// Row-wise RMS normalization without learnable gain: y = x / sqrt(mean(x^2) + eps).
inline Tensor rmsnorm_rows(const Tensor& a, double eps = 1e-5) {
    const auto [rows, n] = detail::rows_cols(a);
    Tape& t = a.tape();
    std::vector<double> out(rows * n);
    const auto& va = a.values();
    for (size_t i = 0; i < rows; ++i) {
        double ms = 0.0;
        for (size_t j = 0; j < n; ++j) ms += va[i * n + j] * va[i * n + j];
        ms = ms / static_cast<double>(n) + eps;
        const double inv = 1.0 / std::sqrt(ms);
        for (size_t j = 0; j < n; ++j) out[i * n + j] = va[i * n + j] * inv;
    }
    Tensor r = t.emplace(a.shape(), std::move(out), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir, rows, n, eps](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        const auto& x = tp.values(ia);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < rows; ++i) {
            const double* xrow = x.data() + i * n;
            const double* grow = g.data() + i * n;
            double ms = 0.0, gx = 0.0;
            for (size_t j = 0; j < n; ++j) ms += xrow[j] * xrow[j];
            ms = ms / static_cast<double>(n) + eps;
            const double inv = 1.0 / std::sqrt(ms);
            for (size_t j = 0; j < n; ++j) gx += grow[j] * xrow[j];
            const double coef = gx * inv * inv * inv / static_cast<double>(n);
            double* garow = ga.data() + i * n;
            for (size_t j = 0; j < n; ++j) garow[j] += grow[j] * inv - coef * xrow[j];
        }
    });
    return r;
}

// ---------------------------------------------------------------------------
// slicing / assembly

inline Tensor slice_rows(const Tensor& a, size_t r0, size_t r1) {
    const auto [m, n] = detail::rows_cols(a);
    if (r0 >= r1 || r1 > m) fail(ErrorKind::shape, "tensor", "slice_rows: bad range");
    Tape& t = a.tape();
    std::vector<double> out(a.values().begin() + static_cast<long>(r0 * n),
                            a.values().begin() + static_cast<long>(r1 * n));
    Tensor r = t.emplace({r1 - r0, n}, std::move(out), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir, r0, n](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < g.size(); ++i) ga[r0 * n + i] += g[i];
    });
    return r;
}

inline Tensor slice_cols(const Tensor& a, size_t c0, size_t c1) {
    const auto [m, n] = detail::rows_cols(a);
    if (c0 >= c1 || c1 > n) fail(ErrorKind::shape, "tensor", "slice_cols: bad range");
    const size_t w = c1 - c0;
    Tape& t = a.tape();
    std::vector<double> out(m * w);
    const auto& va = a.values();
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < w; ++j) out[i * w + j] = va[i * n + c0 + j];
    Tensor r = t.emplace({m, w}, std::move(out), a.requires_grad());
    const uint32_t ia = a.index(), ir = r.index();
    t.set_backward(r, [ia, ir, m, n, c0, w](Tape& tp) {
        if (!tp.requires_grad(ia)) return;
        const auto& g = tp.grad(ir);
        auto& ga = tp.grad_mut(ia);
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < w; ++j) ga[i * n + c0 + j] += g[i * w + j];
    });
    return r;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail(ErrorKind::shape, "tensor", "concat_cols: empty input");
    Tape& t = parts[0].tape();
    const size_t m = detail::rows_cols(parts[0]).first;
    size_t total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        detail::check_same_tape(parts[0], p);
        const auto [pm, pn] = detail::rows_cols(p);
        if (pm != m) fail(ErrorKind::shape, "tensor", "concat_cols: row counts differ");
        total += pn;
        rg = rg || p.requires_grad();
    }
    std::vector<double> out(m * total);
    std::vector<uint32_t> idx;
    std::vector<size_t> widths;
    size_t off = 0;
    for (const Tensor& p : parts) {
        const size_t pn = detail::rows_cols(p).second;
        const auto& v = p.values();
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < pn; ++j) out[i * total + off + j] = v[i * pn + j];
        idx.push_back(p.index());
        widths.push_back(pn);
        off += pn;
    }
    Tensor r = t.emplace({m, total}, std::move(out), rg);
    const uint32_t ir = r.index();
    t.set_backward(r, [idx, widths, ir, m, total](Tape& tp) {
        const auto& g = tp.grad(ir);
        size_t off2 = 0;
        for (size_t p = 0; p < idx.size(); ++p) {
            const size_t w = widths[p];
            if (tp.requires_grad(idx[p])) {
                auto& gp = tp.grad_mut(idx[p]);
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off2 + j];
            }
            off2 += w;
        }
    });
    return r;
}

// Stacks k vectors of length n as the columns of an [n, k] matrix.
inline Tensor stack_cols(const std::vector<Tensor>& cols) {
    if (cols.empty()) fail(ErrorKind::shape, "tensor", "stack_cols: empty input");
    Tape& t = cols[0].tape();
    const size_t n = cols[0].size();
    bool rg = false;
    std::vector<uint32_t> idx;
    for (const Tensor& c : cols) {
        detail::check_same_tape(cols[0], c);
        if (c.size() != n) fail(ErrorKind::shape, "tensor", "stack_cols: lengths differ");
        rg = rg || c.requires_grad();
        idx.push_back(c.index());
    }
    const size_t k = cols.size();
    std::vector<double> out(n * k);
    for (size_t c = 0; c < k; ++c)
        for (size_t i = 0; i < n; ++i) out[i * k + c] = cols[c].values()[i];
    Tensor r = t.emplace({n, k}, std::move(out), rg);
    const uint32_t ir = r.index();
    t.set_backward(r, [idx, ir, n, k](Tape& tp) {
        const auto& g = tp.grad(ir);
        for (size_t c = 0; c < k; ++c) {
            if (!tp.requires_grad(idx[c])) continue;
            auto& gc = tp.grad_mut(idx[c]);
            for (size_t i = 0; i < n; ++i) gc[i] += g[i * k + c];
        }
    });
    return r;
}

// ---------------------------------------------------------------------------
// losses

// Mean negative log-softmax probability of targets over mask-selected rows.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, const std::vector<bool>& mask) {
    const auto [rows, vocab] = detail::rows_cols(logits);
    if (targets.size() != rows || mask.size() != rows)
        fail(ErrorKind::shape, "tensor", "cross_entropy: targets/mask length must equal row count");
    size_t count = 0;
    for (bool m : mask)
        if (m) ++count;
    if (count == 0) fail(ErrorKind::domain, "tensor", "cross_entropy: empty mask (degenerate batch)");
    const auto& v = logits.values();
    double total = 0.0;
    for (size_t i = 0; i < rows; ++i) {
        if (!mask[i]) continue;
        const int tgt = targets[i];
        if (tgt < 0 || static_cast<size_t>(tgt) >= vocab)
            fail(ErrorKind::domain, "tensor", "cross_entropy: target id " + std::to_string(tgt) + " out of range");
        const double* row = v.data() + i * vocab;
        double mx = row[0];
        for (size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (size_t j = 0; j < vocab; ++j) denom += std::exp(row[j] - mx);
        total += std::log(denom) + mx - row[static_cast<size_t>(tgt)];
    }
    Tape& t = logits.tape();
    Tensor r = t.emplace({1}, {total / static_cast<double>(count)}, logits.requires_grad());
    const uint32_t il = logits.index(), ir = r.index();
    t.set_backward(r, [il, ir, rows, vocab, targets, mask, count](Tape& tp) {
        if (!tp.requires_grad(il)) return;
        const double g = tp.grad(ir)[0] / static_cast<double>(count);
        const auto& v2 = tp.values(il);
        auto& gl = tp.grad_mut(il);
        for (size_t i = 0; i < rows; ++i) {
            if (!mask[i]) continue;
            const double* row = v2.data() + i * vocab;
            double* grow = gl.data() + i * vocab;
            double mx = row[0];
            for (size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (size_t j = 0; j < vocab; ++j) denom += std::exp(row[j] - mx);
            for (size_t j = 0; j < vocab; ++j) grow[j] += g * std::exp(row[j] - mx) / denom;
            grow[static_cast<size_t>(targets[i])] -= g;
        }
    });
    return r;
}

// Sum of |entries| off the main diagonal of a square matrix.
inline Tensor sum_offdiag_abs(const Tensor& m) {
    const auto [rows, cols] = detail::rows_cols(m);
    if (rows != cols) fail(ErrorKind::shape, "tensor", "sum_offdiag_abs expects a square matrix");
    const auto& v = m.values();
    double total = 0.0;
    for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j)
            if (i != j) total += std::fabs(v[i * cols + j]);
    Tape& t = m.tape();
    Tensor r = t.emplace({1}, {total}, m.requires_grad());
    const uint32_t im = m.index(), ir = r.index();
    t.set_backward(r, [im, ir, rows, cols](Tape& tp) {
        if (!tp.requires_grad(im)) return;
        const double g = tp.grad(ir)[0];
        const auto& v2 = tp.values(im);
        auto& gm = tp.grad_mut(im);
        for (size_t i = 0; i < rows; ++i)
            for (size_t j = 0; j < cols; ++j) {
                if (i == j) continue;
                const double x = v2[i * cols + j];
                if (x > 0.0)
                    gm[i * cols + j] += g;
                else if (x < 0.0)
                    gm[i * cols + j] -= g;
            }
    });
    return r;
}

} // namespace traitmix
