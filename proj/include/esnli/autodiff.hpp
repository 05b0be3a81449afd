#pragma once

// Reverse-mode automatic differentiation over Tensor, plus the parameter
// store, SGD update, gradient checker and the binary checkpoint container.
//
// A graph node owns its forward value and a gradient accumulator of the same
// shape. backward() walks the graph once in reverse topological order;
// gradients accumulate across shared subexpressions. Subtrees that contain no
// trainable leaf are skipped entirely.

#include <cstdint>
#include <cstdio>
#include <bit>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "esnli/tensor.hpp"

namespace esnli::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // sized lazily during backward
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;
    bool needs_grad = false;
    const char* op = "";

    Tensor& ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor(value.shape());
        return grad;
    }
};

inline Var make_node(Tensor value, std::vector<Var> parents, const char* op) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->op = op;
    for (const Var& p : n->parents)
        if (p->needs_grad) n->needs_grad = true;
    return n;
}

inline Var constant(Tensor t) { return make_node(std::move(t), {}, "const"); }

inline Var leaf(Tensor t) {
    Var v = make_node(std::move(t), {}, "leaf");
    v->needs_grad = true;
    return v;
}

// --- broadcasting ------------------------------------------------------------
// The right operand may be a matching matrix, a 1×N row, a B×1 column, or a
// single scalar.

enum class Bcast { same, row, col, scalar };

inline Bcast bcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.same_shape(b)) return Bcast::same;
    if (b.numel() == 1) return Bcast::scalar;
    if (a.rank() == 2 && b.rank() == 2) {
        if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
        if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
    }
    throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) +
                                " against " + shape_str(a.shape()));
}

inline double bcast_get(const Tensor& b, Bcast k, std::size_t r, std::size_t c) {
    switch (k) {
        case Bcast::same: return b.data()[r * b.cols() + c];
        case Bcast::row: return b.data()[c];
        case Bcast::col: return b.data()[r];
        default: return b.data()[0];
    }
}

inline void bcast_add(Tensor& db, Bcast k, std::size_t r, std::size_t c, double g) {
    switch (k) {
        case Bcast::same: db.data()[r * db.cols() + c] += g; break;
        case Bcast::row: db.data()[c] += g; break;
        case Bcast::col: db.data()[r] += g; break;
        default: db.data()[0] += g; break;
    }
}

namespace detail {

inline void foreach_rc(const Tensor& a, const std::function<void(std::size_t, std::size_t, std::size_t)>& f) {
    const std::size_t rows = a.rank() == 2 ? a.rows() : 1;
    const std::size_t cols = a.rank() == 2 ? a.cols() : a.numel();
    std::size_t idx = 0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c, ++idx) f(r, c, idx);
}

}  // namespace detail

// --- arithmetic ---------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    Bcast k = bcast_kind(a->value, b->value, "add");
    Tensor out = a->value;
    detail::foreach_rc(out, [&](std::size_t r, std::size_t c, std::size_t i) {
        out.data()[i] += bcast_get(b->value, k, r, c);
    });
    Var n = make_node(std::move(out), {a, b}, "add");
    if (n->needs_grad)
        n->backward_fn = [k](Node& self) {
            const Tensor& g = self.grad;
            if (self.parents[0]->needs_grad) self.parents[0]->ensure_grad() += g;
            if (self.parents[1]->needs_grad) {
                Tensor& db = self.parents[1]->ensure_grad();
                detail::foreach_rc(g, [&](std::size_t r, std::size_t c, std::size_t i) {
                    bcast_add(db, k, r, c, g.data()[i]);
                });
            }
        };
    return n;
}

inline Var sub(const Var& a, const Var& b) {
    Bcast k = bcast_kind(a->value, b->value, "sub");
    Tensor out = a->value;
    detail::foreach_rc(out, [&](std::size_t r, std::size_t c, std::size_t i) {
        out.data()[i] -= bcast_get(b->value, k, r, c);
    });
    Var n = make_node(std::move(out), {a, b}, "sub");
    if (n->needs_grad)
        n->backward_fn = [k](Node& self) {
            const Tensor& g = self.grad;
            if (self.parents[0]->needs_grad) self.parents[0]->ensure_grad() += g;
            if (self.parents[1]->needs_grad) {
                Tensor& db = self.parents[1]->ensure_grad();
                detail::foreach_rc(g, [&](std::size_t r, std::size_t c, std::size_t i) {
                    bcast_add(db, k, r, c, -g.data()[i]);
                });
            }
        };
    return n;
}

// elementwise product, with the same broadcast rules as add
inline Var mul(const Var& a, const Var& b) {
    Bcast k = bcast_kind(a->value, b->value, "mul");
    Tensor out = a->value;
    detail::foreach_rc(out, [&](std::size_t r, std::size_t c, std::size_t i) {
        out.data()[i] *= bcast_get(b->value, k, r, c);
    });
    Var n = make_node(std::move(out), {a, b}, "mul");
    if (n->needs_grad)
        n->backward_fn = [k](Node& self) {
            const Tensor& g = self.grad;
            const Tensor& av = self.parents[0]->value;
            const Tensor& bv = self.parents[1]->value;
            if (self.parents[0]->needs_grad) {
                Tensor& da = self.parents[0]->ensure_grad();
                detail::foreach_rc(g, [&](std::size_t r, std::size_t c, std::size_t i) {
                    da.data()[i] += g.data()[i] * bcast_get(bv, k, r, c);
                });
            }
            if (self.parents[1]->needs_grad) {
                Tensor& db = self.parents[1]->ensure_grad();
                detail::foreach_rc(g, [&](std::size_t r, std::size_t c, std::size_t i) {
                    bcast_add(db, k, r, c, g.data()[i] * av.data()[i]);
                });
            }
        };
    return n;
}

inline Var scale(const Var& a, double s) {
    Tensor out = a->value;
    out.scale(s);
    Var n = make_node(std::move(out), {a}, "scale");
    if (n->needs_grad)
        n->backward_fn = [s](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& g = self.grad;
            for (std::size_t i = 0; i < g.numel(); ++i) da.data()[i] += s * g.data()[i];
        };
    return n;
}

inline Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(av.shape()) + " × " +
                                    shape_str(bv.shape()));
    Tensor out(Shape{av.rows(), bv.cols()});
    gemm_nn(av, bv, out);
    Var n = make_node(std::move(out), {a, b}, "matmul");
    if (n->needs_grad)
        n->backward_fn = [](Node& self) {
            const Tensor& g = self.grad;
            if (self.parents[0]->needs_grad)
                gemm_nt_acc(g, self.parents[1]->value, self.parents[0]->ensure_grad());
            if (self.parents[1]->needs_grad)
                gemm_tn_acc(self.parents[0]->value, g, self.parents[1]->ensure_grad());
        };
    return n;
}

// --- elementwise nonlinearities ------------------------------------------------

namespace detail {

template <class Fwd, class Bwd>
Var unary(const Var& a, const char* op, Fwd fwd, Bwd bwd) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data()[i] = fwd(out.data()[i]);
    Var n = make_node(std::move(out), {a}, op);
    if (n->needs_grad)
        n->backward_fn = [bwd](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& x = self.parents[0]->value;
            const Tensor& y = self.value;
            const Tensor& g = self.grad;
            for (std::size_t i = 0; i < g.numel(); ++i)
                da.data()[i] += g.data()[i] * bwd(x.data()[i], y.data()[i]);
        };
    return n;
}

}  // namespace detail

inline Var tanh_op(const Var& a) {
    return detail::unary(a, "tanh", [](double x) { return std::tanh(x); },
                         [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid_op(const Var& a) {
    return detail::unary(a, "sigmoid",
                         [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                                      : std::exp(x) / (1.0 + std::exp(x)); },
                         [](double, double y) { return y * (1.0 - y); });
}

inline Var abs_op(const Var& a) {
    return detail::unary(a, "abs", [](double x) { return std::fabs(x); },
                         [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var log_op(const Var& a) {
    return detail::unary(a, "log", [](double x) { return std::log(x); },
                         [](double x, double) { return 1.0 / x; });
}

// --- shape ops -----------------------------------------------------------------

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    std::size_t rows = parts[0]->value.rows(), cols = 0;
    for (const Var& p : parts) {
        if (p->value.rank() != 2 || p->value.rows() != rows)
            throw std::invalid_argument("concat_cols: row mismatch");
        cols += p->value.cols();
    }
    Tensor out(Shape{rows, cols});
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& v = p->value;
        for (std::size_t r = 0; r < rows; ++r)
            std::copy(v.data() + r * v.cols(), v.data() + (r + 1) * v.cols(), out.data() + r * cols + off);
        off += v.cols();
    }
    Var n = make_node(std::move(out), parts, "concat_cols");
    if (n->needs_grad)
        n->backward_fn = [](Node& self) {
            const Tensor& g = self.grad;
            std::size_t off = 0;
            for (Var& p : self.parents) {
                std::size_t pc = p->value.cols();
                if (p->needs_grad) {
                    Tensor& dp = p->ensure_grad();
                    for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t c = 0; c < pc; ++c) dp(r, c) += g(r, off + c);
                }
                off += pc;
            }
        };
    return n;
}

inline Var slice_cols(const Var& a, std::size_t lo, std::size_t hi) {
    const Tensor& v = a->value;
    if (v.rank() != 2 || hi > v.cols() || lo >= hi)
        throw std::invalid_argument("slice_cols: bad range");
    Tensor out(Shape{v.rows(), hi - lo});
    for (std::size_t r = 0; r < v.rows(); ++r)
        std::copy(v.data() + r * v.cols() + lo, v.data() + r * v.cols() + hi, out.data() + r * out.cols());
    Var n = make_node(std::move(out), {a}, "slice_cols");
    if (n->needs_grad)
        n->backward_fn = [lo](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& g = self.grad;
            for (std::size_t r = 0; r < g.rows(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c) da(r, lo + c) += g(r, c);
        };
    return n;
}

// embedding-style lookup: out[r,:] = table[ids[r],:]
inline Var gather_rows(const Var& table, std::vector<int> ids) {
    const Tensor& t = table->value;
    if (t.rank() != 2) throw std::invalid_argument("gather_rows: table must be 2-d");
    Tensor out(Shape{ids.size(), t.cols()});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        int id = ids[r];
        if (id < 0 || static_cast<std::size_t>(id) >= t.rows())
            throw std::out_of_range("gather_rows: id " + std::to_string(id) + " out of range");
        std::copy(t.data() + static_cast<std::size_t>(id) * t.cols(),
                  t.data() + (static_cast<std::size_t>(id) + 1) * t.cols(), out.data() + r * t.cols());
    }
    Var n = make_node(std::move(out), {table}, "gather_rows");
    if (n->needs_grad)
        n->backward_fn = [ids = std::move(ids)](Node& self) {
            Tensor& dt = self.parents[0]->ensure_grad();
            const Tensor& g = self.grad;
            for (std::size_t r = 0; r < ids.size(); ++r)
                for (std::size_t c = 0; c < g.cols(); ++c)
                    dt(static_cast<std::size_t>(ids[r]), c) += g(r, c);
        };
    return n;
}

// --- reductions -----------------------------------------------------------------

inline Var rowwise_sum(const Var& a) {
    const Tensor& v = a->value;
    if (v.rank() != 2) throw std::invalid_argument("rowwise_sum: expects 2-d input");
    Tensor out(Shape{v.rows(), 1});
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double s = 0;
        for (std::size_t c = 0; c < v.cols(); ++c) s += v(r, c);
        out(r, 0) = s;
    }
    Var n = make_node(std::move(out), {a}, "rowwise_sum");
    if (n->needs_grad)
        n->backward_fn = [](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& g = self.grad;
            for (std::size_t r = 0; r < da.rows(); ++r)
                for (std::size_t c = 0; c < da.cols(); ++c) da(r, c) += g(r, 0);
        };
    return n;
}

inline Var sum_all(const Var& a) {
    double s = 0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value.data()[i];
    Var n = make_node(Tensor::scalar(s), {a}, "sum_all");
    if (n->needs_grad)
        n->backward_fn = [](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            double g = self.grad.data()[0];
            for (std::size_t i = 0; i < da.numel(); ++i) da.data()[i] += g;
        };
    return n;
}

inline Var mean_all(const Var& a) {
    if (a->value.numel() == 0) throw std::invalid_argument("mean_all: empty input");
    return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

// --- softmax family ----------------------------------------------------------------

inline Var softmax_rows(const Var& a) {
    const Tensor& v = a->value;
    if (v.rank() != 2 || v.cols() == 0) throw std::invalid_argument("softmax_rows: empty axis");
    Tensor out(v.shape());
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double m = v(r, 0);
        for (std::size_t c = 1; c < v.cols(); ++c) m = std::max(m, v(r, c));
        double s = 0;
        for (std::size_t c = 0; c < v.cols(); ++c) s += (out(r, c) = std::exp(v(r, c) - m));
        for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) /= s;
    }
    Var n = make_node(std::move(out), {a}, "softmax_rows");
    if (n->needs_grad)
        n->backward_fn = [](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& y = self.value;
            const Tensor& g = self.grad;
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double dot = 0;
                for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
                for (std::size_t c = 0; c < y.cols(); ++c) da(r, c) += y(r, c) * (g(r, c) - dot);
            }
        };
    return n;
}

// Softmax over the leading valid[r] columns of each row; weights on the
// remaining columns are exactly zero.
inline Var masked_softmax_rows(const Var& a, std::vector<std::size_t> valid) {
    const Tensor& v = a->value;
    if (v.rank() != 2) throw std::invalid_argument("masked_softmax_rows: expects 2-d input");
    if (valid.size() != v.rows()) throw std::invalid_argument("masked_softmax_rows: one length per row");
    Tensor out(v.shape());
    for (std::size_t r = 0; r < v.rows(); ++r) {
        std::size_t k = valid[r];
        if (k == 0 || k > v.cols())
            throw std::invalid_argument("masked_softmax_rows: all positions masked in row " + std::to_string(r));
        double m = v(r, 0);
        for (std::size_t c = 1; c < k; ++c) m = std::max(m, v(r, c));
        double s = 0;
        for (std::size_t c = 0; c < k; ++c) s += (out(r, c) = std::exp(v(r, c) - m));
        for (std::size_t c = 0; c < k; ++c) out(r, c) /= s;
    }
    Var n = make_node(std::move(out), {a}, "masked_softmax_rows");
    if (n->needs_grad)
        n->backward_fn = [valid = std::move(valid)](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& y = self.value;
            const Tensor& g = self.grad;
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double dot = 0;
                for (std::size_t c = 0; c < valid[r]; ++c) dot += g(r, c) * y(r, c);
                for (std::size_t c = 0; c < valid[r]; ++c) da(r, c) += y(r, c) * (g(r, c) - dot);
            }
        };
    return n;
}

inline Var log_softmax_rows(const Var& a) {
    const Tensor& v = a->value;
    if (v.rank() != 2 || v.cols() == 0) throw std::invalid_argument("log_softmax_rows: empty axis");
    Tensor out(v.shape());
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double m = v(r, 0);
        for (std::size_t c = 1; c < v.cols(); ++c) m = std::max(m, v(r, c));
        double s = 0;
        for (std::size_t c = 0; c < v.cols(); ++c) s += std::exp(v(r, c) - m);
        double lse = m + std::log(s);
        for (std::size_t c = 0; c < v.cols(); ++c) out(r, c) = v(r, c) - lse;
    }
    Var n = make_node(std::move(out), {a}, "log_softmax_rows");
    if (n->needs_grad)
        n->backward_fn = [](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& y = self.value;
            const Tensor& g = self.grad;
            for (std::size_t r = 0; r < y.rows(); ++r) {
                double gsum = 0;
                for (std::size_t c = 0; c < y.cols(); ++c) gsum += g(r, c);
                for (std::size_t c = 0; c < y.cols(); ++c) da(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
            }
        };
    return n;
}

// Per-row −logp[r, target[r]], scaled by mask[r] when given. Masked rows
// contribute 0 and receive no gradient.
inline Var nll_gather(const Var& logp, std::vector<int> targets, std::vector<double> mask = {}) {
    const Tensor& v = logp->value;
    if (v.rank() != 2 || targets.size() != v.rows())
        throw std::invalid_argument("nll_gather: one target per row");
    if (!mask.empty() && mask.size() != targets.size())
        throw std::invalid_argument("nll_gather: mask length mismatch");
    Tensor out(Shape{v.rows(), 1});
    for (std::size_t r = 0; r < v.rows(); ++r) {
        double m = mask.empty() ? 1.0 : mask[r];
        if (m == 0.0) continue;
        int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= v.cols())
            throw std::out_of_range("nll_gather: target out of range");
        out(r, 0) = -v(r, static_cast<std::size_t>(t)) * m;
    }
    Var n = make_node(std::move(out), {logp}, "nll_gather");
    if (n->needs_grad)
        n->backward_fn = [targets = std::move(targets), mask = std::move(mask)](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& g = self.grad;
            for (std::size_t r = 0; r < g.rows(); ++r) {
                double m = mask.empty() ? 1.0 : mask[r];
                if (m == 0.0) continue;
                da(r, static_cast<std::size_t>(targets[r])) -= g(r, 0) * m;
            }
        };
    return n;
}

// --- max reductions -------------------------------------------------------------

struct MaxResult {
    Var values;
    std::vector<std::size_t> argmax;  // winner index along the reduced axis
};

inline MaxResult max_over_axis(const Var& a, int axis) {
    const Tensor& v = a->value;
    if (v.rank() != 2) throw std::invalid_argument("max_over_axis: expects 2-d input");
    if (axis != 0 && axis != 1) throw std::invalid_argument("max_over_axis: axis must be 0 or 1");
    std::size_t out_n = axis == 0 ? v.cols() : v.rows();
    std::size_t red_n = axis == 0 ? v.rows() : v.cols();
    if (red_n == 0) throw std::invalid_argument("max_over_axis: empty axis");
    Tensor out(axis == 0 ? Shape{1, v.cols()} : Shape{v.rows(), 1});
    std::vector<std::size_t> arg(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
        double best = axis == 0 ? v(0, o) : v(o, 0);
        std::size_t bi = 0;
        for (std::size_t i = 1; i < red_n; ++i) {
            double x = axis == 0 ? v(i, o) : v(o, i);
            if (x > best) { best = x; bi = i; }
        }
        out.data()[o] = best;
        arg[o] = bi;
    }
    Var n = make_node(std::move(out), {a}, "max_over_axis");
    if (n->needs_grad)
        n->backward_fn = [arg, axis](Node& self) {
            Tensor& da = self.parents[0]->ensure_grad();
            const Tensor& g = self.grad;
            for (std::size_t o = 0; o < arg.size(); ++o) {
                if (axis == 0) da(arg[o], o) += g.data()[o];
                else da(o, arg[o]) += g.data()[o];
            }
        };
    return {n, std::move(arg)};
}

// Max over a list of equally shaped B×D step tensors, per row restricted to
// steps t < lengths[b]. Padded steps are treated as −∞, so they can never win
// and receive zero gradient.
inline MaxResult max_over_steps(const std::vector<Var>& steps, const std::vector<std::size_t>& lengths) {
    if (steps.empty()) throw std::invalid_argument("max_over_steps: no steps");
    const std::size_t B = steps[0]->value.rows(), D = steps[0]->value.cols();
    if (lengths.size() != B) throw std::invalid_argument("max_over_steps: one length per row");
    for (std::size_t b = 0; b < B; ++b)
        if (lengths[b] == 0 || lengths[b] > steps.size())
            throw std::invalid_argument("max_over_steps: length out of range for row " + std::to_string(b));
    Tensor out(Shape{B, D});
    std::vector<std::size_t> arg(B * D, 0);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t d = 0; d < D; ++d) out(b, d) = steps[0]->value(b, d);
        for (std::size_t t = 1; t < lengths[b]; ++t)
            for (std::size_t d = 0; d < D; ++d) {
                double x = steps[t]->value(b, d);
                if (x > out(b, d)) { out(b, d) = x; arg[b * D + d] = t; }
            }
    }
    Var n = make_node(std::move(out), steps, "max_over_steps");
    if (n->needs_grad)
        n->backward_fn = [arg](Node& self) {
            const Tensor& g = self.grad;
            const std::size_t D = g.cols();
            for (std::size_t b = 0; b < g.rows(); ++b)
                for (std::size_t d = 0; d < D; ++d) {
                    Var& p = self.parents[arg[b * D + d]];
                    if (p->needs_grad) p->ensure_grad()(b, d) += g(b, d);
                }
        };
    return {n, std::move(arg)};
}

// out[b,:] = steps[pick[b]][b,:]; used to realign per-row reversed sequences
inline Var select_step_rows(const std::vector<Var>& steps, std::vector<std::size_t> pick) {
    if (steps.empty()) throw std::invalid_argument("select_step_rows: no steps");
    const std::size_t B = steps[0]->value.rows(), D = steps[0]->value.cols();
    if (pick.size() != B) throw std::invalid_argument("select_step_rows: one pick per row");
    Tensor out(Shape{B, D});
    for (std::size_t b = 0; b < B; ++b) {
        if (pick[b] >= steps.size()) throw std::out_of_range("select_step_rows: pick out of range");
        const Tensor& v = steps[pick[b]]->value;
        for (std::size_t d = 0; d < D; ++d) out(b, d) = v(b, d);
    }
    Var n = make_node(std::move(out), steps, "select_step_rows");
    if (n->needs_grad)
        n->backward_fn = [pick = std::move(pick)](Node& self) {
            const Tensor& g = self.grad;
            for (std::size_t b = 0; b < g.rows(); ++b) {
                Var& p = self.parents[pick[b]];
                if (!p->needs_grad) continue;
                Tensor& dp = p->ensure_grad();
                for (std::size_t d = 0; d < g.cols(); ++d) dp(b, d) += g(b, d);
            }
        };
    return n;
}

// out = Σ_t weights[:,t] ⊙ values[t], the attention read-out
inline Var weighted_step_sum(const Var& weights, const std::vector<Var>& values) {
    const Tensor& w = weights->value;
    if (w.rank() != 2 || w.cols() != values.size())
        throw std::invalid_argument("weighted_step_sum: one weight column per step");
    const std::size_t B = w.rows(), D = values.empty() ? 0 : values[0]->value.cols();
    Tensor out(Shape{B, D});
    for (std::size_t t = 0; t < values.size(); ++t) {
        const Tensor& v = values[t]->value;
        if (v.rows() != B || v.cols() != D) throw std::invalid_argument("weighted_step_sum: shape mismatch");
        for (std::size_t b = 0; b < B; ++b) {
            double wt = w(b, t);
            if (wt == 0.0) continue;
            for (std::size_t d = 0; d < D; ++d) out(b, d) += wt * v(b, d);
        }
    }
    std::vector<Var> parents{weights};
    parents.insert(parents.end(), values.begin(), values.end());
    Var n = make_node(std::move(out), std::move(parents), "weighted_step_sum");
    if (n->needs_grad)
        n->backward_fn = [](Node& self) {
            const Tensor& g = self.grad;
            const Tensor& w = self.parents[0]->value;
            const std::size_t B = g.rows(), D = g.cols();
            Tensor* dw = self.parents[0]->needs_grad ? &self.parents[0]->ensure_grad() : nullptr;
            for (std::size_t t = 0; t + 1 < self.parents.size(); ++t) {
                Var& vp = self.parents[t + 1];
                Tensor* dv = vp->needs_grad ? &vp->ensure_grad() : nullptr;
                for (std::size_t b = 0; b < B; ++b) {
                    double wt = w(b, t), dot = 0;
                    for (std::size_t d = 0; d < D; ++d) {
                        double gd = g(b, d);
                        dot += vp->value(b, d) * gd;
                        if (dv) (*dv)(b, d) += wt * gd;
                    }
                    if (dw) (*dw)(b, t) += dot;
                }
            }
        };
    return n;
}

// --- backward --------------------------------------------------------------------

inline std::vector<Node*> topo_order(const Var& root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* next = node->parents[idx++].get();
            if (next->needs_grad && seen.insert(next).second) stack.emplace_back(next, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children
}

inline void backward(const Var& root) {
    if (root->value.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar, got shape " + shape_str(root->value.shape()));
    if (!root->needs_grad) return;
    std::vector<Node*> order = topo_order(root);
    root->ensure_grad().data()[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
    }
}

// --- parameters --------------------------------------------------------------------

struct Init {
    enum class Kind { zeros, constant, uniform, uniform_fanin } kind = Kind::zeros;
    double a = 0.0;  // constant value, or uniform half-range

    static Init zeros() { return {}; }
    static Init constant(double v) { return {Kind::constant, v}; }
    static Init uniform(double half_range) { return {Kind::uniform, half_range}; }
    // ±1/sqrt(fan_in), fan_in = leading dimension
    static Init uniform_fanin() { return {Kind::uniform_fanin, 0.0}; }
};

// Named parameter tensors. Initialization is derived from (seed, name), so the
// same seed gives bit-identical tensors regardless of creation order.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 1234) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    Tensor& get_or_init(const std::string& name, const Shape& shape, const Init& init) {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (it->second.shape() != shape)
                throw std::logic_error("ParameterStore: shape conflict for '" + name + "'");
            return it->second;
        }
        Tensor t(shape);
        switch (init.kind) {
            case Init::Kind::zeros: break;
            case Init::Kind::constant: t.fill(init.a); break;
            case Init::Kind::uniform:
            case Init::Kind::uniform_fanin: {
                double a = init.a;
                if (init.kind == Init::Kind::uniform_fanin) {
                    double fan_in = static_cast<double>(shape.empty() ? 1 : shape[0]);
                    a = 1.0 / std::sqrt(fan_in);
                }
                Rng rng(derive_seed(seed_, name));
                for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-a, a);
                break;
            }
        }
        return params_.emplace(name, std::move(t)).first->second;
    }

    Tensor& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
        return it->second;
    }
    const Tensor& at(const std::string& name) const { return const_cast<ParameterStore*>(this)->at(name); }
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    std::map<std::string, Tensor>& tensors() { return params_; }
    const std::map<std::string, Tensor>& tensors() const { return params_; }

private:
    std::uint64_t seed_;
    std::map<std::string, Tensor> params_;  // ordered: checkpoints and updates iterate deterministically
};

struct ParamSpec {
    std::string name;
    Shape shape;
    Init init;
};

// One graph's view of the store: at most one leaf per parameter, so gradient
// contributions from every use accumulate in one place.
class Workspace {
public:
    Var param(ParameterStore& store, const std::string& name, const Shape& shape, const Init& init) {
        auto it = leaves_.find(name);
        if (it != leaves_.end()) return it->second;
        Var v = leaf(store.get_or_init(name, shape, init));
        leaves_.emplace(name, v);
        return v;
    }

    Var param(ParameterStore& store, const ParamSpec& spec) {
        return param(store, spec.name, spec.shape, spec.init);
    }

    // gradient per touched parameter; parameters never reached by backward hold zeros
    std::map<std::string, Tensor> gradients() const {
        std::map<std::string, Tensor> out;
        for (const auto& [name, node] : leaves_) {
            if (node->grad.numel() == node->value.numel()) out.emplace(name, node->grad);
            else out.emplace(name, Tensor(node->value.shape()));
        }
        return out;
    }

    const std::map<std::string, Var>& leaves() const { return leaves_; }

private:
    std::map<std::string, Var> leaves_;
};

// --- SGD -------------------------------------------------------------------------

struct LrSchedule {
    double initial = 0.1;
    double epoch_decay = 0.99;    // multiplicative, each epoch
    double shrink_factor = 5.0;   // applied when the validation metric regresses
    double min_lr = 1e-5;
};

inline double grad_global_norm(const std::map<std::string, Tensor>& grads) {
    double sq = 0;
    for (const auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.numel(); ++i) sq += g.at(i) * g.at(i);
    return std::sqrt(sq);
}

// p ← p − lr·g. A non-finite gradient rejects the whole step. clip_norm ≤ 0
// disables clipping.
inline void sgd_step(ParameterStore& store, const std::map<std::string, Tensor>& grads, double lr,
                     double clip_norm = 0.0) {
    for (const auto& [name, g] : grads) {
        if (!g.all_finite())
            throw std::runtime_error("sgd_step: non-finite gradient for '" + name + "', step rejected");
        if (store.at(name).shape() != g.shape())
            throw std::invalid_argument("sgd_step: gradient shape mismatch for '" + name + "'");
    }
    double factor = 1.0;
    if (clip_norm > 0.0) {
        double norm = grad_global_norm(grads);
        if (norm > clip_norm) factor = clip_norm / norm;
    }
    for (const auto& [name, g] : grads) {
        Tensor& p = store.at(name);
        for (std::size_t i = 0; i < p.numel(); ++i) p.at(i) -= lr * factor * g.at(i);
    }
}

// --- gradient checking --------------------------------------------------------------

// Central finite differences against the graph gradients for every entry of
// every parameter the build touches. `build` must construct the same graph
// from the current store contents each time it is called.
inline double grad_check(ParameterStore& store, const std::function<Var(Workspace&)>& build,
                         double eps = 1e-5) {
    Workspace ws;
    Var root = build(ws);
    if (!root->value.all_finite()) throw std::runtime_error("grad_check: non-finite objective");
    backward(root);
    std::map<std::string, Tensor> analytic = ws.gradients();

    auto eval = [&]() {
        Workspace tmp;
        Var r = build(tmp);
        if (!r->value.all_finite()) throw std::runtime_error("grad_check: non-finite objective");
        return r->value.item();
    };

    double max_rel = 0.0;
    for (auto& [name, ga] : analytic) {
        Tensor& p = store.at(name);
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double keep = p.at(i);
            p.at(i) = keep + eps;
            double fp = eval();
            p.at(i) = keep - eps;
            double fm = eval();
            p.at(i) = keep;
            double numeric = (fp - fm) / (2.0 * eps);
            double a = ga.at(i);
            double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

// --- checkpoints ------------------------------------------------------------------
// Versioned binary container; see the format notes in the README. All integers
// and floats are little-endian.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    }
};

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'E', 'S', 'N', 'L', 'I', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::map<std::string, Tensor> tensors;
};

inline std::string serialize_checkpoint(const std::map<std::string, Tensor>& tensors,
                                        std::uint64_t config_hash) {
    std::string out;
    out.append(kCheckpointMagic, 8);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u64(out, config_hash);
    detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) detail::put_u64(out, d);
        for (std::size_t i = 0; i < t.numel(); ++i) detail::put_f64(out, t.at(i));
    }
    return out;
}

inline void save_checkpoint(const std::string& path, const ParameterStore& store, std::uint64_t config_hash) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
    std::string bytes = serialize_checkpoint(store.tensors(), config_hash);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

inline Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    detail::ByteReader r{bytes, 8};
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Checkpoint ck;
    ck.config_hash = r.u64();
    std::uint32_t count = r.u32();
    for (std::uint32_t e = 0; e < count; ++e) {
        std::string name = r.bytes(r.u32());
        std::uint32_t rank = r.u32();
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<std::size_t>(r.u64());
        Tensor t(shape);
        for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = r.f64();
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

inline void restore(ParameterStore& store, const Checkpoint& ck) {
    for (const auto& [name, t] : ck.tensors) store.get_or_init(name, t.shape(), Init::zeros()) = t;
}

}  // namespace esnli::ad
