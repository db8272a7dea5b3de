#ifndef DDT_MODEL_EMBEDDING_HPP
#define DDT_MODEL_EMBEDDING_HPP

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "ddt/model/masking.hpp"
#include "ddt/model/params.hpp"
#include "ddt/ops.hpp"
#include "ddt/rng.hpp"

namespace ddt {
namespace model {

// ---------------------------------------------------------------------------
// Time features
// ---------------------------------------------------------------------------

inline constexpr std::size_t kTimeFeatureCount = 5;

/// Cyclic hour-of-day and day-of-week encodings plus a holiday flag, derived
/// from epoch-second timestamps. Output L x 5, broadcastable over batches.
inline Tensor time_features(const std::vector<std::int64_t>& timestamps,
                            const std::set<std::int64_t>& holiday_days = {}) {
    const std::size_t L = timestamps.size();
    Tensor f({L, kTimeFeatureCount});
    for (std::size_t t = 0; t < L; ++t) {
        const std::int64_t ts = timestamps[t];
        const std::int64_t day = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
        const double sec_of_day = static_cast<double>(ts - day * 86400);
        const double hour = sec_of_day / 3600.0;
        const std::int64_t dow = ((day % 7) + 7 + 4) % 7; // 1970-01-01 was a Thursday
        f.at2(t, 0) = std::sin(2.0 * M_PI * hour / 24.0);
        f.at2(t, 1) = std::cos(2.0 * M_PI * hour / 24.0);
        f.at2(t, 2) = std::sin(2.0 * M_PI * static_cast<double>(dow) / 7.0);
        f.at2(t, 3) = std::cos(2.0 * M_PI * static_cast<double>(dow) / 7.0);
        f.at2(t, 4) = holiday_days.count(day) ? 1.0 : 0.0;
    }
    return f;
}

// ---------------------------------------------------------------------------
// Heterogeneous embeddings
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor glorot(RngStream& rng, Shape shape, std::size_t fan_in) {
    return rng.normal_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

} // namespace detail

/// CNN + causally masked single-head self-attention embedding for the
/// energy channels.
struct EnergyEmbedParams {
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor wq, wk, wv;
    Tensor attn_b; // shared bias for the three projections, kept at zero init

    static EnergyEmbedParams init(std::size_t n_in, std::size_t d, RngStream& rng) {
        EnergyEmbedParams p;
        p.conv1_w = detail::glorot(rng, {3, n_in, d}, 3 * n_in);
        p.conv1_b = Tensor({d});
        p.conv2_w = detail::glorot(rng, {3, d, d}, 3 * d);
        p.conv2_b = Tensor({d});
        p.wq = detail::glorot(rng, {d, d}, d);
        p.wk = detail::glorot(rng, {d, d}, d);
        p.wv = detail::glorot(rng, {d, d}, d);
        p.attn_b = Tensor({d});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".conv1_w", conv1_w);
        reg.add(prefix + ".conv1_b", conv1_b);
        reg.add(prefix + ".conv2_w", conv2_w);
        reg.add(prefix + ".conv2_b", conv2_b);
        reg.add(prefix + ".wq", wq);
        reg.add(prefix + ".wk", wk);
        reg.add(prefix + ".wv", wv);
        reg.add(prefix + ".attn_b", attn_b);
    }
};

/// Two dilated-free conv layers for local features, then causally masked
/// self-attention for long-range structure (with a residual around it).
/// Causal padding keeps every output position independent of later inputs.
inline Var embed_energy(Graph& g, const ParamBinding& pb, const EnergyEmbedParams& p, Var x /* B,L,Ne */,
                        ConvPad pad = ConvPad::causal) {
    const Tensor& tx = g.value(x);
    const std::size_t B = tx.dim(0), L = tx.dim(1);
    Var h = gelu(g, conv1d(g, x, pb(p.conv1_w), pb(p.conv1_b), 1, pad));
    h = conv1d(g, h, pb(p.conv2_w), pb(p.conv2_b), 1, pad);
    Var q = affine3(g, h, pb(p.wq), pb(p.attn_b));
    Var k = affine3(g, h, pb(p.wk), pb(p.attn_b));
    Var v = affine3(g, h, pb(p.wv), pb(p.attn_b));
    const std::size_t d = g.value(q).dim(2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Var scores = mul_scalar(g, bmm(g, q, k, false, true), scale);
    Var masked = add(g, scores, reshape(g, g.constant(build_causal_mask(L)), {1, L, L}));
    Var attn = bmm(g, softmax_rows(g, masked), v);
    (void)B;
    return add(g, h, attn);
}

/// Two-layer mapping network for one covariate source.
struct CovariateEmbedParams {
    Tensor w1, b1, w2, b2;

    static CovariateEmbedParams init(std::size_t n_in, std::size_t d, RngStream& rng) {
        CovariateEmbedParams p;
        p.w1 = detail::glorot(rng, {n_in, d}, n_in);
        p.b1 = Tensor({d});
        p.w2 = detail::glorot(rng, {d, d}, d);
        p.b2 = Tensor({d});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".w1", w1);
        reg.add(prefix + ".b1", b1);
        reg.add(prefix + ".w2", w2);
        reg.add(prefix + ".b2", b2);
    }
};

inline Var embed_covariate(Graph& g, const ParamBinding& pb, const CovariateEmbedParams& p, Var x) {
    return affine3(g, gelu(g, affine3(g, x, pb(p.w1), pb(p.b1))), pb(p.w2), pb(p.b2));
}

// ---------------------------------------------------------------------------
// Gated fusion (sigmoid gate over the energy embedding vs. an MLP blend)
// ---------------------------------------------------------------------------

struct FusionParams {
    Tensor w_g, b_g;   // 3D -> D gate
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;

    static FusionParams init(std::size_t d, RngStream& rng) {
        FusionParams p;
        p.w_g = detail::glorot(rng, {3 * d, d}, 3 * d);
        p.b_g = Tensor({d});
        p.mlp_w1 = detail::glorot(rng, {3 * d, d}, 3 * d);
        p.mlp_b1 = Tensor({d});
        p.mlp_w2 = detail::glorot(rng, {d, d}, d);
        p.mlp_b2 = Tensor({d});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".w_g", w_g);
        reg.add(prefix + ".b_g", b_g);
        reg.add(prefix + ".mlp_w1", mlp_w1);
        reg.add(prefix + ".mlp_b1", mlp_b1);
        reg.add(prefix + ".mlp_w2", mlp_w2);
        reg.add(prefix + ".mlp_b2", mlp_b2);
    }
};

struct GatedFusionOut {
    Var fused;
    Var gate; // exposed so the convex-combination property is checkable
};

/// G = sigmoid(W_g [E_e; E_w; E_t] + b_g); out = G * E_e + (1-G) * MLP(cat).
inline GatedFusionOut gated_fuse(Graph& g, const ParamBinding& pb, const FusionParams& p, Var e_e, Var e_w,
                                 Var e_t) {
    if (!(g.value(e_e).same_shape(g.value(e_w)) && g.value(e_e).same_shape(g.value(e_t))))
        throw ShapeError("gated_fuse: embedding shapes differ: " + shape_str(g.value(e_e).shape()) + " vs " +
                         shape_str(g.value(e_w).shape()) + " vs " + shape_str(g.value(e_t).shape()));
    Var cat = concat(g, {e_e, e_w, e_t}, 2);
    Var gate = sigmoid(g, affine3(g, cat, pb(p.w_g), pb(p.b_g)));
    Var blend = affine3(g, gelu(g, affine3(g, cat, pb(p.mlp_w1), pb(p.mlp_b1))), pb(p.mlp_w2), pb(p.mlp_b2));
    Var one_minus = add_scalar(g, mul_scalar(g, gate, -1.0), 1.0);
    GatedFusionOut out;
    out.gate = gate;
    out.fused = add(g, mul(g, gate, e_e), mul(g, one_minus, blend));
    return out;
}

} // namespace model
} // namespace ddt

#endif
