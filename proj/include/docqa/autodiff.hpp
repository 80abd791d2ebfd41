#pragma once

// Dense rank-2 tensors on a reverse-mode gradient tape. Ops are recorded
// in creation order (already topological); backward runs one reverse sweep
// and visits each node once. A tape is single-threaded; independent tapes
// may live on separate threads.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace docqa::ad {

template <typename T>
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, T(0)) {}
    Tensor(int r, int c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != static_cast<std::size_t>(r) * c) {
            throw std::invalid_argument("Tensor: data size does not match shape " + shape_str());
        }
    }

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor scalar(T v) {
        Tensor t(1, 1);
        t.data[0] = v;
        return t;
    }
    static Tensor column(std::vector<T> d) {
        int n = static_cast<int>(d.size());
        return Tensor(n, 1, std::move(d));
    }

    T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t numel() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const {
        return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
    }
    T item() const {
        if (numel() != 1) throw std::invalid_argument("item: tensor " + shape_str() + " is not scalar");
        return data[0];
    }
};

// A named, optionally trainable weight. Gradients accumulate in `grad`
// across tapes until the optimizer consumes and zeroes them.
template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;

    Param() = default;
    Param(std::string n, Tensor<T> v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols), trainable(train) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T(0)); }
};

template <typename T>
class Tape;

template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

    const Tensor<T>& val() const;
    const Tensor<T>& grad() const;
    int rows() const { return val().rows; }
    int cols() const { return val().cols; }
    int id() const { return id_; }
    Tape<T>* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    int id_ = -1;
};

template <typename T>
class Tape {
public:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;  // allocated on first accumulation
        bool needs_grad = false;
        std::function<void(Tape&, int)> backward;  // empty for leaves
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    Var<T> constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

    // Differentiable leaf, used by grad_check and tests.
    Var<T> input(Tensor<T> v) { return push(std::move(v), grad_enabled_, nullptr); }

    // Parameter leaf; memoized so shared weights enter the tape once.
    Var<T> use(Param<T>& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return Var<T>(this, it->second);
        Var<T> v = push(p.value, grad_enabled_ && p.trainable, nullptr);
        param_nodes_.emplace(&p, v.id());
        if (grad_enabled_ && p.trainable) param_flush_.emplace_back(&p, v.id());
        return v;
    }

    const Tensor<T>& value(int id) const { return nodes_[id].value; }
    const Tensor<T>& grad(int id) const {
        const Node& n = nodes_[id];
        if (n.grad.empty()) {
            zero_like_.emplace_back(Tensor<T>::zeros(n.value.rows, n.value.cols));
            return zero_like_.back();
        }
        return n.grad;
    }

    // Accumulates `g` into the node gradient, allocating on demand.
    void accumulate(int id, const Tensor<T>& g) {
        Node& n = nodes_[id];
        if (!n.needs_grad) return;
        if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.rows, n.value.cols);
        T* dst = n.grad.data.data();
        const T* src = g.data.data();
        for (std::size_t i = 0; i < g.data.size(); ++i) dst[i] += src[i];
    }
    Tensor<T>& grad_buffer(int id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.rows, n.value.cols);
        return n.grad;
    }
    bool needs_grad(int id) const { return nodes_[id].needs_grad; }

    // Single reverse sweep from a scalar output.
    void backward(Var<T> loss) {
        if (!grad_enabled_) throw std::logic_error("backward: tape created with gradients disabled");
        if (loss.val().numel() != 1) {
            throw std::invalid_argument("backward: output " + loss.val().shape_str() + " is not scalar");
        }
        grad_buffer(loss.id()).data[0] = T(1);
        for (int id = loss.id(); id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
            n.backward(*this, id);
        }
    }

    // Adds node gradients into their Param grad buffers (scaled).
    void accumulate_param_grads(T scale = T(1)) {
        for (auto& [p, id] : param_flush_) {
            const Node& n = nodes_[id];
            if (n.grad.empty()) continue;
            for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
                p->grad.data[i] += scale * n.grad.data[i];
            }
        }
    }

    std::size_t size() const { return nodes_.size(); }

    Var<T> push(Tensor<T> v, bool needs_grad, std::function<void(Tape&, int)> bw) {
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs_grad && grad_enabled_;
        if (n.needs_grad) n.backward = std::move(bw);
        nodes_.push_back(std::move(n));
        return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
    }

private:
    bool grad_enabled_;
    std::vector<Node> nodes_;
    std::unordered_map<Param<T>*, int> param_nodes_;
    std::vector<std::pair<Param<T>*, int>> param_flush_;
    mutable std::vector<Tensor<T>> zero_like_;
};

template <typename T>
const Tensor<T>& Var<T>::val() const {
    return tape_->value(id_);
}
template <typename T>
const Tensor<T>& Var<T>::grad() const {
    return tape_->grad(id_);
}

namespace detail {

template <typename T>
[[noreturn]] inline void shape_error(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                b.shape_str());
}

template <typename T>
inline T stable_sigmoid(T x) {
    if (x >= T(0)) {
        T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
inline T stable_softplus(T x) {
    T m = x > T(0) ? x : T(0);
    return m + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// primitives

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    const Tensor<T>& A = a.val();
    const Tensor<T>& B = b.val();
    if (A.cols != B.rows) detail::shape_error("matmul", A, B);
    Tensor<T> out(A.rows, B.cols);
    for (int i = 0; i < A.rows; ++i) {
        const T* arow = &A.data[static_cast<std::size_t>(i) * A.cols];
        T* orow = &out.data[static_cast<std::size_t>(i) * out.cols];
        for (int k = 0; k < A.cols; ++k) {
            T av = arow[k];
            if (av == T(0)) continue;
            const T* brow = &B.data[static_cast<std::size_t>(k) * B.cols];
            for (int j = 0; j < B.cols; ++j) orow[j] += av * brow[j];
        }
    }
    int ia = a.id(), ib = b.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia) || a.tape()->needs_grad(ib),
                          [ia, ib](Tape<T>& t, int self) {
                              const Tensor<T>& G = t.grad(self);
                              const Tensor<T>& A = t.value(ia);
                              const Tensor<T>& B = t.value(ib);
                              if (t.needs_grad(ia)) {
                                  Tensor<T>& dA = t.grad_buffer(ia);
                                  // dA += G * B^T
                                  for (int i = 0; i < A.rows; ++i)
                                      for (int k = 0; k < A.cols; ++k) {
                                          T s = T(0);
                                          for (int j = 0; j < B.cols; ++j)
                                              s += G.at(i, j) * B.at(k, j);
                                          dA.at(i, k) += s;
                                      }
                              }
                              if (t.needs_grad(ib)) {
                                  Tensor<T>& dB = t.grad_buffer(ib);
                                  // dB += A^T * G
                                  for (int k = 0; k < A.cols; ++k)
                                      for (int i = 0; i < A.rows; ++i) {
                                          T av = A.at(i, k);
                                          if (av == T(0)) continue;
                                          for (int j = 0; j < B.cols; ++j)
                                              dB.at(k, j) += av * G.at(i, j);
                                      }
                              }
                          });
}

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Var<T> binary_same_shape(const char* name, Var<T> a, Var<T> b, FwdFn fwd, BwdFn bwd) {
    const Tensor<T>& A = a.val();
    const Tensor<T>& B = b.val();
    if (!A.same_shape(B)) shape_error(name, A, B);
    Tensor<T> out(A.rows, A.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = fwd(A.data[i], B.data[i]);
    int ia = a.id(), ib = b.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia) || a.tape()->needs_grad(ib),
                          [ia, ib, bwd](Tape<T>& t, int self) { bwd(t, self, ia, ib); });
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    return detail::binary_same_shape<T>(
        "add", a, b, [](T x, T y) { return x + y; },
        [](Tape<T>& t, int self, int ia, int ib) {
            t.accumulate(ia, t.grad(self));
            t.accumulate(ib, t.grad(self));
        });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    return detail::binary_same_shape<T>(
        "sub", a, b, [](T x, T y) { return x - y; },
        [](Tape<T>& t, int self, int ia, int ib) {
            t.accumulate(ia, t.grad(self));
            if (t.needs_grad(ib)) {
                const Tensor<T>& G = t.grad(self);
                Tensor<T>& dB = t.grad_buffer(ib);
                for (std::size_t i = 0; i < G.data.size(); ++i) dB.data[i] -= G.data[i];
            }
        });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    return detail::binary_same_shape<T>(
        "mul", a, b, [](T x, T y) { return x * y; },
        [](Tape<T>& t, int self, int ia, int ib) {
            const Tensor<T>& G = t.grad(self);
            const Tensor<T>& A = t.value(ia);
            const Tensor<T>& B = t.value(ib);
            if (t.needs_grad(ia)) {
                Tensor<T>& dA = t.grad_buffer(ia);
                for (std::size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i] * B.data[i];
            }
            if (t.needs_grad(ib)) {
                Tensor<T>& dB = t.grad_buffer(ib);
                for (std::size_t i = 0; i < G.data.size(); ++i) dB.data[i] += G.data[i] * A.data[i];
            }
        });
}

// M + v broadcast over rows; v is [1 x cols].
template <typename T>
Var<T> add_rowvec(Var<T> m, Var<T> v) {
    const Tensor<T>& M = m.val();
    const Tensor<T>& V = v.val();
    if (V.rows != 1 || V.cols != M.cols) detail::shape_error("add_rowvec", M, V);
    Tensor<T> out(M.rows, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) out.at(i, j) = M.at(i, j) + V.at(0, j);
    int im = m.id(), iv = v.id();
    return m.tape()->push(std::move(out), m.tape()->needs_grad(im) || m.tape()->needs_grad(iv),
                          [im, iv](Tape<T>& t, int self) {
                              const Tensor<T>& G = t.grad(self);
                              t.accumulate(im, G);
                              if (t.needs_grad(iv)) {
                                  Tensor<T>& dV = t.grad_buffer(iv);
                                  for (int i = 0; i < G.rows; ++i)
                                      for (int j = 0; j < G.cols; ++j) dV.at(0, j) += G.at(i, j);
                              }
                          });
}

// M + u broadcast over columns; u is [rows x 1].
template <typename T>
Var<T> add_colvec(Var<T> m, Var<T> u) {
    const Tensor<T>& M = m.val();
    const Tensor<T>& U = u.val();
    if (U.cols != 1 || U.rows != M.rows) detail::shape_error("add_colvec", M, U);
    Tensor<T> out(M.rows, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) out.at(i, j) = M.at(i, j) + U.at(i, 0);
    int im = m.id(), iu = u.id();
    return m.tape()->push(std::move(out), m.tape()->needs_grad(im) || m.tape()->needs_grad(iu),
                          [im, iu](Tape<T>& t, int self) {
                              const Tensor<T>& G = t.grad(self);
                              t.accumulate(im, G);
                              if (t.needs_grad(iu)) {
                                  Tensor<T>& dU = t.grad_buffer(iu);
                                  for (int i = 0; i < G.rows; ++i)
                                      for (int j = 0; j < G.cols; ++j) dU.at(i, 0) += G.at(i, j);
                              }
                          });
}

// M * v elementwise with v broadcast over rows; v is [1 x cols].
template <typename T>
Var<T> mul_rowvec(Var<T> m, Var<T> v) {
    const Tensor<T>& M = m.val();
    const Tensor<T>& V = v.val();
    if (V.rows != 1 || V.cols != M.cols) detail::shape_error("mul_rowvec", M, V);
    Tensor<T> out(M.rows, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) out.at(i, j) = M.at(i, j) * V.at(0, j);
    int im = m.id(), iv = v.id();
    return m.tape()->push(std::move(out), m.tape()->needs_grad(im) || m.tape()->needs_grad(iv),
                          [im, iv](Tape<T>& t, int self) {
                              const Tensor<T>& G = t.grad(self);
                              const Tensor<T>& M2 = t.value(im);
                              const Tensor<T>& V2 = t.value(iv);
                              if (t.needs_grad(im)) {
                                  Tensor<T>& dM = t.grad_buffer(im);
                                  for (int i = 0; i < G.rows; ++i)
                                      for (int j = 0; j < G.cols; ++j)
                                          dM.at(i, j) += G.at(i, j) * V2.at(0, j);
                              }
                              if (t.needs_grad(iv)) {
                                  Tensor<T>& dV = t.grad_buffer(iv);
                                  for (int i = 0; i < G.rows; ++i)
                                      for (int j = 0; j < G.cols; ++j)
                                          dV.at(0, j) += G.at(i, j) * M2.at(i, j);
                              }
                          });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
    const Tensor<T>& A = a.val();
    Tensor<T> out(A.rows, A.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = c * A.data[i];
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia),
                          [ia, c](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              const Tensor<T>& G = t.grad(self);
                              Tensor<T>& dA = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < G.data.size(); ++i)
                                  dA.data[i] += c * G.data[i];
                          });
}

namespace detail {

template <typename T, typename FwdFn, typename GradFn>
Var<T> unary_op(Var<T> a, FwdFn fwd, GradFn dydx_from_xy) {
    const Tensor<T>& A = a.val();
    Tensor<T> out(A.rows, A.cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = fwd(A.data[i]);
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia),
                          [ia, dydx_from_xy](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              const Tensor<T>& G = t.grad(self);
                              const Tensor<T>& X = t.value(ia);
                              const Tensor<T>& Y = t.value(self);
                              Tensor<T>& dA = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < G.data.size(); ++i)
                                  dA.data[i] += G.data[i] * dydx_from_xy(X.data[i], Y.data[i]);
                          });
}

}  // namespace detail

template <typename T>
Var<T> relu(Var<T> a) {
    return detail::unary_op<T>(
        a, [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh_op(Var<T> a) {
    return detail::unary_op<T>(
        a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
    return detail::unary_op<T>(
        a, [](T x) { return detail::stable_sigmoid(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> exp_op(Var<T> a) {
    return detail::unary_op<T>(
        a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_op(Var<T> a) {
    return detail::unary_op<T>(
        a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> softplus(Var<T> a) {
    return detail::unary_op<T>(
        a, [](T x) { return detail::stable_softplus(x); },
        [](T x, T) { return detail::stable_sigmoid(x); });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    Tape<T>* tape = parts[0].tape();
    int cols = parts[0].cols();
    int rows = 0;
    bool needs = false;
    for (const auto& p : parts) {
        if (p.cols() != cols) detail::shape_error("concat_rows", parts[0].val(), p.val());
        rows += p.rows();
        needs = needs || tape->needs_grad(p.id());
    }
    Tensor<T> out(rows, cols);
    int r = 0;
    std::vector<std::pair<int, int>> srcs;  // (id, row offset)
    srcs.reserve(parts.size());
    for (const auto& p : parts) {
        const Tensor<T>& P = p.val();
        std::copy(P.data.begin(), P.data.end(), out.data.begin() + static_cast<std::size_t>(r) * cols);
        srcs.emplace_back(p.id(), r);
        r += P.rows;
    }
    return tape->push(std::move(out), needs, [srcs, cols](Tape<T>& t, int self) {
        const Tensor<T>& G = t.grad(self);
        for (auto [id, off] : srcs) {
            if (!t.needs_grad(id)) continue;
            Tensor<T>& d = t.grad_buffer(id);
            const T* src = &G.data[static_cast<std::size_t>(off) * cols];
            for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] += src[i];
        }
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Tape<T>* tape = parts[0].tape();
    int rows = parts[0].rows();
    int cols = 0;
    bool needs = false;
    for (const auto& p : parts) {
        if (p.rows() != rows) detail::shape_error("concat_cols", parts[0].val(), p.val());
        cols += p.cols();
        needs = needs || tape->needs_grad(p.id());
    }
    Tensor<T> out(rows, cols);
    int c = 0;
    std::vector<std::pair<int, int>> srcs;  // (id, col offset)
    for (const auto& p : parts) {
        const Tensor<T>& P = p.val();
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < P.cols; ++j) out.at(i, c + j) = P.at(i, j);
        srcs.emplace_back(p.id(), c);
        c += P.cols;
    }
    return tape->push(std::move(out), needs, [srcs](Tape<T>& t, int self) {
        const Tensor<T>& G = t.grad(self);
        for (auto [id, off] : srcs) {
            if (!t.needs_grad(id)) continue;
            Tensor<T>& d = t.grad_buffer(id);
            for (int i = 0; i < d.rows; ++i)
                for (int j = 0; j < d.cols; ++j) d.at(i, j) += G.at(i, off + j);
        }
    });
}

// Rows [r0, r1) as a new tensor.
template <typename T>
Var<T> slice_rows(Var<T> a, int r0, int r1) {
    const Tensor<T>& A = a.val();
    if (r0 < 0 || r1 > A.rows || r0 >= r1) {
        throw std::invalid_argument("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                                    ") out of range for " + A.shape_str());
    }
    Tensor<T> out(r1 - r0, A.cols);
    std::copy(A.data.begin() + static_cast<std::size_t>(r0) * A.cols,
              A.data.begin() + static_cast<std::size_t>(r1) * A.cols, out.data.begin());
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia),
                          [ia, r0](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              const Tensor<T>& G = t.grad(self);
                              Tensor<T>& dA = t.grad_buffer(ia);
                              T* dst = &dA.data[static_cast<std::size_t>(r0) * dA.cols];
                              for (std::size_t i = 0; i < G.data.size(); ++i) dst[i] += G.data[i];
                          });
}

template <typename T>
Var<T> slice_cols(Var<T> a, int c0, int c1) {
    const Tensor<T>& A = a.val();
    if (c0 < 0 || c1 > A.cols || c0 >= c1) {
        throw std::invalid_argument("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") out of range for " + A.shape_str());
    }
    Tensor<T> out(A.rows, c1 - c0);
    for (int i = 0; i < A.rows; ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = A.at(i, j);
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia),
                          [ia, c0](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              const Tensor<T>& G = t.grad(self);
                              Tensor<T>& dA = t.grad_buffer(ia);
                              for (int i = 0; i < G.rows; ++i)
                                  for (int j = 0; j < G.cols; ++j) dA.at(i, c0 + j) += G.at(i, j);
                          });
}

template <typename T>
Var<T> reverse_rows(Var<T> a) {
    const Tensor<T>& A = a.val();
    Tensor<T> out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) out.at(i, j) = A.at(A.rows - 1 - i, j);
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia), [ia](Tape<T>& t, int self) {
        if (!t.needs_grad(ia)) return;
        const Tensor<T>& G = t.grad(self);
        Tensor<T>& dA = t.grad_buffer(ia);
        for (int i = 0; i < G.rows; ++i)
            for (int j = 0; j < G.cols; ++j) dA.at(G.rows - 1 - i, j) += G.at(i, j);
    });
}

template <typename T>
Var<T> transpose(Var<T> a) {
    const Tensor<T>& A = a.val();
    Tensor<T> out(A.cols, A.rows);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) out.at(j, i) = A.at(i, j);
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia), [ia](Tape<T>& t, int self) {
        if (!t.needs_grad(ia)) return;
        const Tensor<T>& G = t.grad(self);
        Tensor<T>& dA = t.grad_buffer(ia);
        for (int i = 0; i < G.rows; ++i)
            for (int j = 0; j < G.cols; ++j) dA.at(j, i) += G.at(i, j);
    });
}

template <typename T>
Var<T> reshape(Var<T> a, int r, int c) {
    const Tensor<T>& A = a.val();
    if (static_cast<std::size_t>(r) * c != A.numel()) {
        throw std::invalid_argument("reshape: cannot view " + A.shape_str() + " as [" +
                                    std::to_string(r) + "x" + std::to_string(c) + "]");
    }
    Tensor<T> out(r, c, A.data);
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia), [ia](Tape<T>& t, int self) {
        if (!t.needs_grad(ia)) return;
        const Tensor<T>& G = t.grad(self);
        Tensor<T>& dA = t.grad_buffer(ia);
        for (std::size_t i = 0; i < G.data.size(); ++i) dA.data[i] += G.data[i];
    });
}

// Max over axis 1 -> [rows x 1]; over axis 0 -> [1 x cols]. Gradient flows
// to the first maximal element.
template <typename T>
Var<T> max_over_axis(Var<T> a, int axis) {
    const Tensor<T>& A = a.val();
    if (A.numel() == 0 || (axis != 0 && axis != 1)) {
        throw std::invalid_argument("max_over_axis: bad axis or empty tensor " + A.shape_str());
    }
    std::vector<int> argmax;
    Tensor<T> out;
    if (axis == 1) {
        out = Tensor<T>(A.rows, 1);
        argmax.resize(A.rows);
        for (int i = 0; i < A.rows; ++i) {
            int best = 0;
            for (int j = 1; j < A.cols; ++j)
                if (A.at(i, j) > A.at(i, best)) best = j;
            argmax[i] = best;
            out.at(i, 0) = A.at(i, best);
        }
    } else {
        out = Tensor<T>(1, A.cols);
        argmax.resize(A.cols);
        for (int j = 0; j < A.cols; ++j) {
            int best = 0;
            for (int i = 1; i < A.rows; ++i)
                if (A.at(i, j) > A.at(best, j)) best = i;
            argmax[j] = best;
            out.at(0, j) = A.at(best, j);
        }
    }
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia),
                          [ia, axis, argmax](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              const Tensor<T>& G = t.grad(self);
                              Tensor<T>& dA = t.grad_buffer(ia);
                              if (axis == 1) {
                                  for (int i = 0; i < dA.rows; ++i)
                                      dA.at(i, argmax[i]) += G.at(i, 0);
                              } else {
                                  for (int j = 0; j < dA.cols; ++j)
                                      dA.at(argmax[j], j) += G.at(0, j);
                              }
                          });
}

// Row-wise softmax with an optional 0/1 mask. Masked entries get weight 0;
// a fully masked row yields an all-zero row (degenerate-row convention used
// by self-attention at n = 1). Stable via max-shift per row.
template <typename T>
Var<T> softmax_rows(Var<T> a, const Tensor<T>* mask = nullptr) {
    const Tensor<T>& A = a.val();
    if (mask && !A.same_shape(*mask)) detail::shape_error("softmax_rows", A, *mask);
    Tensor<T> out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i) {
        T m = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < A.cols; ++j) {
            if (mask && mask->at(i, j) == T(0)) continue;
            m = std::max(m, A.at(i, j));
        }
        if (m == -std::numeric_limits<T>::infinity()) continue;  // fully masked -> zeros
        T denom = T(0);
        for (int j = 0; j < A.cols; ++j) {
            if (mask && mask->at(i, j) == T(0)) continue;
            denom += std::exp(A.at(i, j) - m);
        }
        for (int j = 0; j < A.cols; ++j) {
            if (mask && mask->at(i, j) == T(0)) continue;
            out.at(i, j) = std::exp(A.at(i, j) - m) / denom;
        }
    }
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia), [ia](Tape<T>& t, int self) {
        if (!t.needs_grad(ia)) return;
        const Tensor<T>& G = t.grad(self);
        const Tensor<T>& P = t.value(self);
        Tensor<T>& dA = t.grad_buffer(ia);
        for (int i = 0; i < P.rows; ++i) {
            T dot = T(0);
            for (int j = 0; j < P.cols; ++j) dot += G.at(i, j) * P.at(i, j);
            for (int j = 0; j < P.cols; ++j) dA.at(i, j) += P.at(i, j) * (G.at(i, j) - dot);
        }
    });
}

// log(sum(exp(x))) over every element -> [1 x 1], max-shifted.
template <typename T>
Var<T> logsumexp(Var<T> a) {
    const Tensor<T>& A = a.val();
    if (A.numel() == 0) throw std::invalid_argument("logsumexp: empty tensor");
    T m = A.data[0];
    for (T v : A.data) m = std::max(m, v);
    T s = T(0);
    for (T v : A.data) s += std::exp(v - m);
    Tensor<T> out = Tensor<T>::scalar(m + std::log(s));
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia), [ia](Tape<T>& t, int self) {
        if (!t.needs_grad(ia)) return;
        T g = t.grad(self).data[0];
        const Tensor<T>& X = t.value(ia);
        T y = t.value(self).data[0];
        Tensor<T>& dA = t.grad_buffer(ia);
        for (std::size_t i = 0; i < X.data.size(); ++i)
            dA.data[i] += g * std::exp(X.data[i] - y);
    });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
    const Tensor<T>& A = a.val();
    T s = T(0);
    for (T v : A.data) s += v;
    int ia = a.id();
    return a.tape()->push(Tensor<T>::scalar(s), a.tape()->needs_grad(ia),
                          [ia](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              T g = t.grad(self).data[0];
                              Tensor<T>& dA = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < dA.data.size(); ++i) dA.data[i] += g;
                          });
}

// Rows of `a` selected by index (repeats allowed); backward scatter-adds.
template <typename T>
Var<T> gather_rows(Var<T> a, std::vector<int> idx) {
    const Tensor<T>& A = a.val();
    for (int i : idx) {
        if (i < 0 || i >= A.rows) {
            throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                        " out of range for " + A.shape_str());
        }
    }
    Tensor<T> out(static_cast<int>(idx.size()), A.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < A.cols; ++j) out.at(static_cast<int>(r), j) = A.at(idx[r], j);
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia),
                          [ia, idx](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              const Tensor<T>& G = t.grad(self);
                              Tensor<T>& dA = t.grad_buffer(ia);
                              for (std::size_t r = 0; r < idx.size(); ++r)
                                  for (int j = 0; j < G.cols; ++j)
                                      dA.at(idx[r], j) += G.at(static_cast<int>(r), j);
                          });
}

// Sliding windows of `width` rows flattened per window: [L x d] ->
// [max(1, L-width+1) x width*d], zero-padded when L < width.
template <typename T>
Var<T> im2col_1d(Var<T> a, int width) {
    const Tensor<T>& A = a.val();
    if (width < 1) throw std::invalid_argument("im2col_1d: width must be >= 1");
    int L = A.rows, d = A.cols;
    int P = std::max(1, L - width + 1);
    Tensor<T> out(P, width * d);
    for (int p = 0; p < P; ++p)
        for (int w = 0; w < width; ++w) {
            int src = p + w;
            if (src >= L) continue;
            for (int j = 0; j < d; ++j) out.at(p, w * d + j) = A.at(src, j);
        }
    int ia = a.id();
    return a.tape()->push(std::move(out), a.tape()->needs_grad(ia),
                          [ia, width, L, d](Tape<T>& t, int self) {
                              if (!t.needs_grad(ia)) return;
                              const Tensor<T>& G = t.grad(self);
                              Tensor<T>& dA = t.grad_buffer(ia);
                              for (int p = 0; p < G.rows; ++p)
                                  for (int w = 0; w < width; ++w) {
                                      int src = p + w;
                                      if (src >= L) continue;
                                      for (int j = 0; j < d; ++j)
                                          dA.at(src, j) += G.at(p, w * d + j);
                                  }
                          });
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) {
    return add(a, b);
}
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) {
    return sub(a, b);
}
template <typename T>
Var<T> operator*(Var<T> a, Var<T> b) {
    return mul(a, b);
}

}  // namespace docqa::ad
