#ifndef DDT_GRAPH_HPP
#define DDT_GRAPH_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ddt/tensor.hpp"

namespace ddt {

using Var = std::int32_t;

namespace bc {

inline Shape align(const Shape& s, std::size_t rank) {
    Shape out(rank, 1);
    for (std::size_t i = 0; i < s.size(); ++i) out[rank - s.size() + i] = s[i];
    return out;
}

/// Numpy-style broadcast result shape; dims must match or be 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape aa = align(a, r), bb = align(b, r), out(r);
    for (std::size_t i = 0; i < r; ++i) {
        if (aa[i] == bb[i])
            out[i] = aa[i];
        else if (aa[i] == 1)
            out[i] = bb[i];
        else if (bb[i] == 1)
            out[i] = aa[i];
        else
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
    }
    return out;
}

/// Row-major strides of `s` aligned to an output of shape `out`, with
/// stride 0 on broadcast axes.
inline std::vector<std::size_t> strides_into(const Shape& s, const Shape& out) {
    const std::size_t r = out.size();
    Shape ss = align(s, r);
    std::vector<std::size_t> st(r, 0);
    std::size_t acc = 1;
    for (std::size_t i = r; i-- > 0;) {
        st[i] = (ss[i] == 1) ? 0 : acc;
        acc *= ss[i];
    }
    return st;
}

/// Walks an output shape once, tracking element offsets into two
/// broadcast operands.
struct PairIter {
    const Shape& out;
    std::vector<std::size_t> sa, sb, idx;
    std::size_t oa = 0, ob = 0;

    PairIter(const Shape& out_, const Shape& a, const Shape& b)
        : out(out_), sa(strides_into(a, out_)), sb(strides_into(b, out_)), idx(out_.size(), 0) {}

    void advance() {
        for (std::size_t d = out.size(); d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out[d]) return;
            oa -= sa[d] * out[d];
            ob -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
};

inline Tensor broadcast_to(const Tensor& t, const Shape& out) {
    if (t.shape() == out) return t;
    Tensor y(out);
    PairIter it(out, t.shape(), t.shape());
    for (std::size_t i = 0; i < y.numel(); ++i, it.advance()) y[i] = t[it.oa];
    return y;
}

/// Sum `g` down to `target` (the reverse of broadcasting to g's shape).
inline Tensor reduce_to(const Tensor& g, const Shape& target) {
    if (g.shape() == target) return g;
    Tensor out(target);
    PairIter it(g.shape(), target, target);
    for (std::size_t i = 0; i < g.numel(); ++i, it.advance()) out[it.oa] += g[i];
    return out;
}

} // namespace bc

/// Reverse-mode tape. Ops append nodes eagerly (construction is the forward
/// pass); backward walks the tape in reverse, accumulating each node's
/// adjoint fully before visiting its parents.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, Var, const Tensor&)>;

    struct Node {
        Tensor value;
        std::vector<Var> parents;
        BackwardFn backward;
        const char* op = "leaf";
        bool requires_grad = false;
    };

    Graph() { nodes_.reserve(1024); }

    Var leaf(Tensor value) {
        Node n;
        n.value = std::move(value);
        n.op = "leaf";
        n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    Var constant(Tensor value) {
        Node n;
        n.value = std::move(value);
        n.op = "const";
        n.requires_grad = false;
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    Var add_node(Tensor value, std::vector<Var> parents, BackwardFn backward, const char* op) {
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.op = op;
        for (Var p : n.parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
        if (n.requires_grad) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    const Tensor& value(Var v) const { return nodes_.at(v).value; }
    const char* op_name(Var v) const { return nodes_.at(v).op; }
    std::size_t size() const { return nodes_.size(); }

    /// Accumulate into a node's adjoint (no-op for constant subgraphs).
    void accumulate(Var v, const Tensor& delta) {
        Node& n = nodes_[v];
        if (!n.requires_grad) return;
        Tensor& a = adjoints_[v];
        if (a.numel() == 0) a = Tensor(n.value.shape());
        if (!a.same_shape(delta))
            throw ShapeError(std::string("accumulate(") + n.op + "): adjoint " + shape_str(a.shape()) +
                             " vs delta " + shape_str(delta.shape()));
        double* ad = a.data();
        const double* dd = delta.data();
        for (std::size_t i = 0; i < a.numel(); ++i) ad[i] += dd[i];
    }

    /// Run reverse-mode accumulation from a scalar output.
    void backward(Var out) {
        if (out < 0 || static_cast<std::size_t>(out) >= nodes_.size())
            throw GraphError("backward before forward: no such node in graph");
        if (nodes_[out].value.numel() != 1)
            throw GraphError(std::string("backward: output of op '") + nodes_[out].op +
                             "' has shape " + shape_str(nodes_[out].value.shape()) + ", expected a scalar");
        adjoints_.assign(nodes_.size(), Tensor());
        adjoints_[out] = Tensor(nodes_[out].value.shape());
        adjoints_[out][0] = 1.0;
        for (Var v = out; v >= 0; --v) {
            Node& n = nodes_[v];
            if (!n.requires_grad || !n.backward) continue;
            const Tensor& gy = adjoints_[v];
            if (gy.numel() == 0) continue; // not on any path to `out`
            n.backward(*this, v, gy);
        }
        ran_backward_ = true;
    }

    /// Gradient of the last backward() output w.r.t. node v (zeros if v is
    /// not on any path to the output).
    Tensor grad(Var v) const {
        if (!ran_backward_) throw GraphError("grad: backward has not been run");
        const Tensor& a = adjoints_.at(v);
        if (a.numel() == 0) return Tensor(nodes_.at(v).value.shape());
        return a;
    }

private:
    std::vector<Node> nodes_;
    std::vector<Tensor> adjoints_;
    bool ran_backward_ = false;
};

} // namespace ddt

#endif
