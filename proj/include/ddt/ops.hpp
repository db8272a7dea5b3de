#ifndef DDT_OPS_HPP
#define DDT_OPS_HPP

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "ddt/graph.hpp"
#include "ddt/tensor.hpp"

namespace ddt {

namespace detail {

inline void check_same_rank3(const Tensor& t, const char* op) {
    if (t.rank() != 3) throw ShapeError(std::string(op) + ": expected rank-3 tensor, got " + shape_str(t.shape()));
}

/// C (+)= op_a(A) * op_b(B) for 2-D matrices, materializing transposes.
inline Tensor mm(const Tensor& A, const Tensor& B, bool ta, bool tb, const char* op = "matmul") {
    if (A.rank() != 2 || B.rank() != 2)
        throw ShapeError(std::string(op) + ": expected 2-D operands, got " + shape_str(A.shape()) + " and " +
                         shape_str(B.shape()));
    const std::size_t m = ta ? A.dim(1) : A.dim(0);
    const std::size_t k = ta ? A.dim(0) : A.dim(1);
    const std::size_t kb = tb ? B.dim(1) : B.dim(0);
    const std::size_t n = tb ? B.dim(0) : B.dim(1);
    if (k != kb)
        throw ShapeError(std::string(op) + ": inner dimensions of " + shape_str(A.shape()) + (ta ? "^T" : "") +
                         " and " + shape_str(B.shape()) + (tb ? "^T" : "") + " do not match");
    Tensor C({m, n});
    const double* a = A.data();
    const double* b = B.data();
    double* c = C.data();
    if (!ta && !tb) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l) {
                const double av = a[i * k + l];
                if (av == 0.0) continue;
                const double* br = b + l * n;
                double* cr = c + i * n;
                for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
    } else if (ta && !tb) {
        // A is (k, m)
        for (std::size_t l = 0; l < k; ++l) {
            const double* ar = a + l * m;
            const double* br = b + l * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = ar[i];
                if (av == 0.0) continue;
                double* cr = c + i * n;
                for (std::size_t j = 0; j < n; ++j) cr[j] += av * br[j];
            }
        }
    } else if (!ta && tb) {
        // B is (n, k)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double* ar = a + i * k;
                const double* br = b + j * k;
                double s = 0.0;
                for (std::size_t l = 0; l < k; ++l) s += ar[l] * br[l];
                c[i * n + j] = s;
            }
    } else {
        // (k,m)^T (n,k)^T
        for (std::size_t l = 0; l < k; ++l)
            for (std::size_t i = 0; i < m; ++i) {
                const double av = a[l * m + i];
                if (av == 0.0) continue;
                double* cr = c + i * n;
                for (std::size_t j = 0; j < n; ++j) cr[j] += av * b[j * k + l];
            }
    }
    return C;
}

/// Batched mm over leading dim; A (G,p,q), B (G,r,s).
inline Tensor bmm_t(const Tensor& A, const Tensor& B, bool ta, bool tb, const char* op = "bmm") {
    check_same_rank3(A, op);
    check_same_rank3(B, op);
    if (A.dim(0) != B.dim(0))
        throw ShapeError(std::string(op) + ": batch dims of " + shape_str(A.shape()) + " and " +
                         shape_str(B.shape()) + " differ");
    const std::size_t G = A.dim(0);
    const std::size_t m = ta ? A.dim(2) : A.dim(1);
    const std::size_t n = tb ? B.dim(1) : B.dim(2);
    Tensor C({G, m, n});
    for (std::size_t gidx = 0; gidx < G; ++gidx) {
        Tensor As({A.dim(1), A.dim(2)},
                  std::vector<double>(A.data() + gidx * A.dim(1) * A.dim(2),
                                      A.data() + (gidx + 1) * A.dim(1) * A.dim(2)));
        Tensor Bs({B.dim(1), B.dim(2)},
                  std::vector<double>(B.data() + gidx * B.dim(1) * B.dim(2),
                                      B.data() + (gidx + 1) * B.dim(1) * B.dim(2)));
        Tensor Cs = mm(As, Bs, ta, tb, op);
        std::memcpy(C.data() + gidx * m * n, Cs.data(), m * n * sizeof(double));
    }
    return C;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with numpy-style broadcasting
// ---------------------------------------------------------------------------

namespace detail {

template <class F, class DFa, class DFb>
Var binary_op(Graph& g, Var a, Var b, const char* name, F f, DFa dfa, DFb dfb) {
    const Tensor& ta = g.value(a);
    const Tensor& tb = g.value(b);
    Shape out_shape = bc::broadcast_shape(ta.shape(), tb.shape(), name);
    Tensor y(out_shape);
    if (ta.same_shape(tb) && ta.shape() == out_shape) {
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = f(ta[i], tb[i]);
    } else {
        bc::PairIter it(out_shape, ta.shape(), tb.shape());
        for (std::size_t i = 0; i < y.numel(); ++i, it.advance()) y[i] = f(ta[it.oa], tb[it.ob]);
    }
    auto backward = [a, b, dfa, dfb](Graph& gr, Var self, const Tensor& gy) {
        const Tensor& va = gr.value(a);
        const Tensor& vb = gr.value(b);
        Tensor da(va.shape()), db(vb.shape());
        if (va.same_shape(vb) && va.same_shape(gy)) {
            for (std::size_t i = 0; i < gy.numel(); ++i) {
                da[i] = gy[i] * dfa(va[i], vb[i]);
                db[i] = gy[i] * dfb(va[i], vb[i]);
            }
        } else {
            bc::PairIter it(gy.shape(), va.shape(), vb.shape());
            for (std::size_t i = 0; i < gy.numel(); ++i, it.advance()) {
                da[it.oa] += gy[i] * dfa(va[it.oa], vb[it.ob]);
                db[it.ob] += gy[i] * dfb(va[it.oa], vb[it.ob]);
            }
        }
        gr.accumulate(a, da);
        gr.accumulate(b, db);
        (void)self;
    };
    return g.add_node(std::move(y), {a, b}, backward, name);
}

} // namespace detail

inline Var add(Graph& g, Var a, Var b) {
    return detail::binary_op(
        g, a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Var sub(Graph& g, Var a, Var b) {
    return detail::binary_op(
        g, a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Var mul(Graph& g, Var a, Var b) {
    return detail::binary_op(
        g, a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Var div_op(Graph& g, Var a, Var b) {
    return detail::binary_op(
        g, a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

/// Elementwise max; ties split the subgradient evenly.
inline Var maximum(Graph& g, Var a, Var b) {
    return detail::binary_op(
        g, a, b, "maximum", [](double x, double y) { return x > y ? x : y; },
        [](double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); },
        [](double x, double y) { return y > x ? 1.0 : (x == y ? 0.5 : 0.0); });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

template <class F, class DF>
Var unary_op(Graph& g, Var a, const char* name, F f, DF df) {
    const Tensor& ta = g.value(a);
    Tensor y(ta.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = f(ta[i]);
    auto backward = [a, df](Graph& gr, Var self, const Tensor& gy) {
        const Tensor& va = gr.value(a);
        const Tensor& vy = gr.value(self);
        Tensor da(va.shape());
        for (std::size_t i = 0; i < gy.numel(); ++i) da[i] = gy[i] * df(va[i], vy[i]);
        gr.accumulate(a, da);
    };
    return g.add_node(std::move(y), {a}, backward, name);
}

inline double sigmoid_s(double x) {
    if (x >= 0) {
        const double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

inline double softplus_s(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

} // namespace detail

inline Var add_scalar(Graph& g, Var a, double c) {
    return detail::unary_op(
        g, a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var mul_scalar(Graph& g, Var a, double c) {
    return detail::unary_op(
        g, a, "mul_scalar", [c](double x) { return x * c; }, [c](double, double) { return c; });
}

inline Var neg(Graph& g, Var a) { return mul_scalar(g, a, -1.0); }

inline Var exp_op(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log_op(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sqrt_op(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "sqrt", [](double x) { return std::sqrt(x); },
        [](double, double y) { return 0.5 / (y > 0 ? y : 1e-300); });
}

inline Var tanh_op(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "sigmoid", [](double x) { return detail::sigmoid_s(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var softplus(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "softplus", [](double x) { return detail::softplus_s(x); },
        [](double x, double) { return detail::sigmoid_s(x); });
}

/// Exact GELU: x * Phi(x).
inline Var gelu(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "gelu", [](double x) { return x * detail::norm_cdf(x); },
        [](double x, double) { return detail::norm_cdf(x) + x * detail::norm_pdf(x); });
}

inline Var relu(Graph& g, Var a) {
    return detail::unary_op(
        g, a, "relu", [](double x) { return x > 0 ? x : 0.0; },
        [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

inline Var matmul(Graph& g, Var a, Var b, bool ta = false, bool tb = false) {
    Tensor y = detail::mm(g.value(a), g.value(b), ta, tb);
    auto backward = [a, b, ta, tb](Graph& gr, Var, const Tensor& gy) {
        const Tensor& va = gr.value(a);
        const Tensor& vb = gr.value(b);
        Tensor da = ta ? detail::mm(vb, gy, tb, true) : detail::mm(gy, vb, false, !tb);
        Tensor db = tb ? detail::mm(gy, va, true, ta) : detail::mm(va, gy, !ta, false);
        gr.accumulate(a, da);
        gr.accumulate(b, db);
    };
    return g.add_node(std::move(y), {a, b}, backward, "matmul");
}

inline Var bmm(Graph& g, Var a, Var b, bool ta = false, bool tb = false) {
    Tensor y = detail::bmm_t(g.value(a), g.value(b), ta, tb);
    auto backward = [a, b, ta, tb](Graph& gr, Var, const Tensor& gy) {
        const Tensor& va = gr.value(a);
        const Tensor& vb = gr.value(b);
        Tensor da = ta ? detail::bmm_t(vb, gy, tb, true) : detail::bmm_t(gy, vb, false, !tb);
        Tensor db = tb ? detail::bmm_t(gy, va, true, ta) : detail::bmm_t(va, gy, !ta, false);
        gr.accumulate(a, da);
        gr.accumulate(b, db);
    };
    return g.add_node(std::move(y), {a, b}, backward, "bmm");
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Var reshape(Graph& g, Var a, Shape s) {
    Tensor y = g.value(a).reshaped(std::move(s));
    auto backward = [a](Graph& gr, Var, const Tensor& gy) {
        gr.accumulate(a, gy.reshaped(gr.value(a).shape()));
    };
    return g.add_node(std::move(y), {a}, backward, "reshape");
}

namespace detail {

inline Tensor permute_t(const Tensor& t, const std::vector<std::size_t>& perm) {
    const std::size_t r = t.rank();
    if (perm.size() != r) throw ShapeError("permute: axis list length " + std::to_string(perm.size()) +
                                           " does not match tensor rank of " + shape_str(t.shape()));
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = t.dim(perm[i]);
    Tensor y(out_shape);
    std::vector<std::size_t> in_strides(r, 1), st(r);
    for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * t.dim(i + 1);
    for (std::size_t i = 0; i < r; ++i) st[i] = in_strides[perm[i]];
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        y[i] = t[off];
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            off += st[d];
            if (idx[d] < out_shape[d]) break;
            off -= st[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    return y;
}

} // namespace detail

inline Var permute(Graph& g, Var a, std::vector<std::size_t> perm) {
    Tensor y = detail::permute_t(g.value(a), perm);
    auto backward = [a, perm](Graph& gr, Var, const Tensor& gy) {
        std::vector<std::size_t> inv(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
        gr.accumulate(a, detail::permute_t(gy, inv));
    };
    return g.add_node(std::move(y), {a}, backward, "permute");
}

namespace detail {

inline void slice_geometry(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& mid,
                           std::size_t& inner) {
    outer = 1;
    inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    mid = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

} // namespace detail

inline Var slice(Graph& g, Var a, std::size_t axis, std::size_t start, std::size_t len) {
    const Tensor& t = g.value(a);
    if (axis >= t.rank() || start + len > t.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of bounds for axis " + std::to_string(axis) + " of " + shape_str(t.shape()));
    std::size_t outer, mid, inner;
    detail::slice_geometry(t.shape(), axis, outer, mid, inner);
    Shape out_shape = t.shape();
    out_shape[axis] = len;
    Tensor y(out_shape);
    for (std::size_t o = 0; o < outer; ++o)
        std::memcpy(y.data() + o * len * inner, t.data() + (o * mid + start) * inner,
                    len * inner * sizeof(double));
    auto backward = [a, axis, start, len](Graph& gr, Var, const Tensor& gy) {
        const Tensor& t0 = gr.value(a);
        std::size_t outer, mid, inner;
        detail::slice_geometry(t0.shape(), axis, outer, mid, inner);
        Tensor da(t0.shape());
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(da.data() + (o * mid + start) * inner, gy.data() + o * len * inner,
                        len * inner * sizeof(double));
        gr.accumulate(a, da);
    };
    return g.add_node(std::move(y), {a}, backward, "slice");
}

inline Var concat(Graph& g, const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Tensor& first = g.value(parts[0]);
    Shape out_shape = first.shape();
    std::size_t total = 0;
    std::vector<std::size_t> lens;
    for (Var p : parts) {
        const Tensor& t = g.value(p);
        if (t.rank() != first.rank())
            throw ShapeError("concat: rank mismatch between " + shape_str(first.shape()) + " and " +
                             shape_str(t.shape()));
        for (std::size_t d = 0; d < t.rank(); ++d)
            if (d != axis && t.dim(d) != first.dim(d))
                throw ShapeError("concat: shapes " + shape_str(first.shape()) + " and " + shape_str(t.shape()) +
                                 " differ off-axis");
        lens.push_back(t.dim(axis));
        total += t.dim(axis);
    }
    out_shape[axis] = total;
    Tensor y(out_shape);
    std::size_t outer, mid, inner;
    detail::slice_geometry(out_shape, axis, outer, mid, inner);
    std::size_t off = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const Tensor& t = g.value(parts[pi]);
        for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(y.data() + (o * mid + off) * inner, t.data() + o * lens[pi] * inner,
                        lens[pi] * inner * sizeof(double));
        off += lens[pi];
    }
    std::vector<Var> ps = parts;
    auto backward = [ps, lens, axis](Graph& gr, Var self, const Tensor& gy) {
        std::size_t outer, mid, inner;
        detail::slice_geometry(gy.shape(), axis, outer, mid, inner);
        std::size_t off = 0;
        for (std::size_t pi = 0; pi < ps.size(); ++pi) {
            Tensor dp(gr.value(ps[pi]).shape());
            for (std::size_t o = 0; o < outer; ++o)
                std::memcpy(dp.data() + o * lens[pi] * inner, gy.data() + (o * mid + off) * inner,
                            lens[pi] * inner * sizeof(double));
            gr.accumulate(ps[pi], dp);
            off += lens[pi];
        }
        (void)self;
    };
    return g.add_node(std::move(y), parts, backward, "concat");
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace detail {

inline Shape reduced_shape(const Shape& s, const std::vector<std::size_t>& axes, bool keepdims) {
    Shape keep = s;
    for (std::size_t ax : axes) {
        if (ax >= s.size()) throw ShapeError("reduce: axis " + std::to_string(ax) + " out of range for " + shape_str(s));
        keep[ax] = 1;
    }
    if (keepdims) return keep;
    Shape out;
    std::vector<bool> is_red(s.size(), false);
    for (std::size_t ax : axes) is_red[ax] = true;
    for (std::size_t d = 0; d < s.size(); ++d)
        if (!is_red[d]) out.push_back(s[d]);
    if (out.empty()) out.push_back(1);
    return out;
}

} // namespace detail

inline Var reduce_sum(Graph& g, Var a, std::vector<std::size_t> axes, bool keepdims = true) {
    const Tensor& t = g.value(a);
    Shape keep = t.shape();
    for (std::size_t ax : axes) {
        if (ax >= t.rank()) throw ShapeError("reduce_sum: axis " + std::to_string(ax) + " out of range for " + shape_str(t.shape()));
        keep[ax] = 1;
    }
    Tensor y = bc::reduce_to(t, keep);
    Shape out_shape = detail::reduced_shape(t.shape(), axes, keepdims);
    y = y.reshaped(out_shape);
    Shape keep_shape = keep;
    auto backward = [a, keep_shape](Graph& gr, Var, const Tensor& gy) {
        Tensor gk = gy.reshaped(keep_shape);
        gr.accumulate(a, bc::broadcast_to(gk, gr.value(a).shape()));
    };
    return g.add_node(std::move(y), {a}, backward, "reduce_sum");
}

inline Var reduce_mean(Graph& g, Var a, std::vector<std::size_t> axes, bool keepdims = true) {
    const Tensor& t = g.value(a);
    std::size_t cnt = 1;
    for (std::size_t ax : axes) cnt *= t.dim(ax);
    Var s = reduce_sum(g, a, std::move(axes), keepdims);
    return mul_scalar(g, s, 1.0 / static_cast<double>(cnt));
}

inline Var sum_all(Graph& g, Var a) {
    const Tensor& t = g.value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) s += t[i];
    auto backward = [a](Graph& gr, Var, const Tensor& gy) {
        gr.accumulate(a, Tensor::full(gr.value(a).shape(), gy[0]));
    };
    return g.add_node(Tensor::scalar(s), {a}, backward, "sum_all");
}

inline Var mean_all(Graph& g, Var a) {
    const std::size_t n = g.value(a).numel();
    return mul_scalar(g, sum_all(g, a), 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Softmax over the last axis, with exact zeros at masked entries
// ---------------------------------------------------------------------------

/// Row softmax over the last axis. Entries at or below kMaskedThreshold
/// (additive -inf surrogate) receive probability exactly 0; rows whose
/// entries are all masked come back as all zeros.
inline Var softmax_rows(Graph& g, Var a) {
    const Tensor& t = g.value(a);
    if (t.rank() < 1) throw ShapeError("softmax_rows: rank-0 input");
    const std::size_t cols = t.dim(t.rank() - 1);
    const std::size_t rows = t.numel() / cols;
    Tensor y(t.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = t.data() + r * cols;
        double* p = y.data() + r * cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cols; ++j)
            if (x[j] > kMaskedThreshold && x[j] > mx) mx = x[j];
        if (!std::isfinite(mx)) continue; // fully masked row -> zeros
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            if (x[j] > kMaskedThreshold) {
                p[j] = std::exp(x[j] - mx);
                z += p[j];
            } else {
                p[j] = 0.0;
            }
        }
        for (std::size_t j = 0; j < cols; ++j) p[j] /= z;
    }
    auto backward = [a, cols](Graph& gr, Var self, const Tensor& gy) {
        const Tensor& p = gr.value(self);
        Tensor dx(p.shape());
        const std::size_t rows = p.numel() / cols;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* pr = p.data() + r * cols;
            const double* gr_ = gy.data() + r * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j) dot += pr[j] * gr_[j];
            double* dr = dx.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) dr[j] = pr[j] * (gr_[j] - dot);
        }
        gr.accumulate(a, dx);
    };
    return g.add_node(std::move(y), {a}, backward, "softmax");
}

// ---------------------------------------------------------------------------
// 1-D convolution along the middle axis of (B, L, C_in)
// ---------------------------------------------------------------------------

enum class ConvPad { same, causal };

/// Dilated 1-D convolution; kernel (k, C_in, C_out), odd k. `same` pads
/// (k-1)/2*dilation on both sides; `causal` pads only on the left.
inline Var conv1d(Graph& g, Var x, Var w, Var bias, std::size_t dilation, ConvPad pad = ConvPad::same) {
    const Tensor& tx = g.value(x);
    const Tensor& tw = g.value(w);
    const Tensor& tb = g.value(bias);
    detail::check_same_rank3(tx, "conv1d");
    detail::check_same_rank3(tw, "conv1d kernel");
    const std::size_t B = tx.dim(0), L = tx.dim(1), Cin = tx.dim(2);
    const std::size_t k = tw.dim(0), Cout = tw.dim(2);
    if (k % 2 == 0) throw ShapeError("conv1d: kernel size " + std::to_string(k) + " must be odd");
    if (tw.dim(1) != Cin)
        throw ShapeError("conv1d: input channels of " + shape_str(tx.shape()) + " vs kernel " +
                         shape_str(tw.shape()));
    if (tb.numel() != Cout)
        throw ShapeError("conv1d: bias " + shape_str(tb.shape()) + " vs C_out " + std::to_string(Cout));
    if (dilation < 1) throw ShapeError("conv1d: dilation must be >= 1");
    const std::ptrdiff_t pad_left = static_cast<std::ptrdiff_t>(
        (pad == ConvPad::causal ? (k - 1) : (k - 1) / 2) * dilation);

    Tensor y({B, L, Cout});
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t t = 0; t < L; ++t) {
            double* yr = y.data() + (bi * L + t) * Cout;
            for (std::size_t co = 0; co < Cout; ++co) yr[co] = tb[co];
            for (std::size_t j = 0; j < k; ++j) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) +
                                         static_cast<std::ptrdiff_t>(j * dilation) - pad_left;
                if (s < 0 || s >= static_cast<std::ptrdiff_t>(L)) continue;
                const double* xr = tx.data() + (bi * L + s) * Cin;
                const double* wr = tw.data() + j * Cin * Cout;
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const double xv = xr[ci];
                    if (xv == 0.0) continue;
                    const double* wc = wr + ci * Cout;
                    for (std::size_t co = 0; co < Cout; ++co) yr[co] += xv * wc[co];
                }
            }
        }

    auto backward = [x, w, bias, dilation, pad_left, k](Graph& gr, Var, const Tensor& gy) {
        const Tensor& tx = gr.value(x);
        const Tensor& tw = gr.value(w);
        const std::size_t B = tx.dim(0), L = tx.dim(1), Cin = tx.dim(2);
        const std::size_t Cout = tw.dim(2);
        Tensor dx(tx.shape()), dw(tw.shape()), db(gr.value(bias).shape());
        for (std::size_t bi = 0; bi < B; ++bi)
            for (std::size_t t = 0; t < L; ++t) {
                const double* gyr = gy.data() + (bi * L + t) * Cout;
                for (std::size_t co = 0; co < Cout; ++co) db[co] += gyr[co];
                for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) +
                                             static_cast<std::ptrdiff_t>(j * dilation) - pad_left;
                    if (s < 0 || s >= static_cast<std::ptrdiff_t>(L)) continue;
                    const double* xr = tx.data() + (bi * L + s) * Cin;
                    double* dxr = dx.data() + (bi * L + s) * Cin;
                    const double* wr = tw.data() + j * Cin * Cout;
                    double* dwr = dw.data() + j * Cin * Cout;
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        const double* wc = wr + ci * Cout;
                        double* dwc = dwr + ci * Cout;
                        double acc = 0.0;
                        for (std::size_t co = 0; co < Cout; ++co) {
                            acc += gyr[co] * wc[co];
                            dwc[co] += gyr[co] * xr[ci];
                        }
                        dxr[ci] += acc;
                    }
                }
            }
        gr.accumulate(x, dx);
        gr.accumulate(w, dw);
        gr.accumulate(bias, db);
    };
    return g.add_node(std::move(y), {x, w, bias}, backward, "conv1d");
}

// ---------------------------------------------------------------------------
// Discrete-selection helpers
// ---------------------------------------------------------------------------

/// Straight-through node: forward takes the given hard tensor, backward
/// passes the adjoint unchanged to the relaxed parent.
inline Var straight_through(Graph& g, Var relaxed, Tensor hard) {
    if (!g.value(relaxed).same_shape(hard))
        throw ShapeError("straight_through: hard " + shape_str(hard.shape()) + " vs relaxed " +
                         shape_str(g.value(relaxed).shape()));
    auto backward = [relaxed](Graph& gr, Var, const Tensor& gy) { gr.accumulate(relaxed, gy); };
    return g.add_node(std::move(hard), {relaxed}, backward, "straight_through");
}

/// Embed a length-n vector as the diagonal of an n x n matrix.
inline Var diag_embed(Graph& g, Var v) {
    const Tensor& t = g.value(v);
    if (t.rank() != 1) throw ShapeError("diag_embed: expected vector, got " + shape_str(t.shape()));
    const std::size_t n = t.dim(0);
    Tensor y({n, n});
    for (std::size_t i = 0; i < n; ++i) y.at2(i, i) = t[i];
    auto backward = [v, n](Graph& gr, Var, const Tensor& gy) {
        Tensor dv({n});
        for (std::size_t i = 0; i < n; ++i) dv[i] = gy[i * n + i];
        gr.accumulate(v, dv);
    };
    return g.add_node(std::move(y), {v}, backward, "diag_embed");
}

/// y[i] = params[index[i]]; backward scatter-adds. `params` is 1-D.
inline Var gather_index(Graph& g, Var params, std::vector<std::size_t> index, Shape out_shape) {
    const Tensor& t = g.value(params);
    if (t.rank() != 1) throw ShapeError("gather_index: params must be 1-D, got " + shape_str(t.shape()));
    if (index.size() != shape_numel(out_shape))
        throw ShapeError("gather_index: index count " + std::to_string(index.size()) + " vs out shape " +
                         shape_str(out_shape));
    Tensor y(out_shape);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= t.numel()) throw ShapeError("gather_index: index out of range");
        y[i] = t[index[i]];
    }
    auto backward = [params, index](Graph& gr, Var, const Tensor& gy) {
        Tensor dp(gr.value(params).shape());
        for (std::size_t i = 0; i < index.size(); ++i) dp[index[i]] += gy[i];
        gr.accumulate(params, dp);
    };
    return g.add_node(std::move(y), {params}, backward, "gather_index");
}

// ---------------------------------------------------------------------------
// Composition helpers
// ---------------------------------------------------------------------------

/// x (R, in) @ W (in, out) + b (out).
inline Var affine(Graph& g, Var x, Var W, Var b) { return add(g, matmul(g, x, W), b); }

/// Apply an affine map along the last axis of a rank-3 tensor.
inline Var affine3(Graph& g, Var x, Var W, Var b) {
    const Tensor& t = g.value(x);
    detail::check_same_rank3(t, "affine3");
    const std::size_t B = t.dim(0), T = t.dim(1), I = t.dim(2);
    Var flat = reshape(g, x, {B * T, I});
    Var out = affine(g, flat, W, b);
    return reshape(g, out, {B, T, g.value(W).dim(1)});
}

} // namespace ddt

#endif
