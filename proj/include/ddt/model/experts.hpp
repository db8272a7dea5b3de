#ifndef DDT_MODEL_EXPERTS_HPP
#define DDT_MODEL_EXPERTS_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ddt/model/params.hpp"
#include "ddt/ops.hpp"
#include "ddt/rng.hpp"

namespace ddt {
namespace model {

inline constexpr std::array<std::size_t, 3> kTemporalKernels = {1, 3, 5};

// ---------------------------------------------------------------------------
// Temporal expert: multi-scale gated dilated convolutions
// ---------------------------------------------------------------------------

struct TemporalExpertParams {
    std::array<Tensor, 3> dconv_w, dconv_b; // value branch per kernel size
    std::array<Tensor, 3> gconv_w, gconv_b; // gate branch per kernel size
    Tensor mixer_w, mixer_b;

    static TemporalExpertParams init(std::size_t d, RngStream& rng) {
        TemporalExpertParams p;
        for (std::size_t i = 0; i < 3; ++i) {
            const std::size_t k = kTemporalKernels[i];
            const double s = 1.0 / std::sqrt(static_cast<double>(k * d));
            p.dconv_w[i] = rng.normal_tensor({k, d, d}, s);
            p.dconv_b[i] = Tensor({d});
            p.gconv_w[i] = rng.normal_tensor({k, d, d}, s);
            p.gconv_b[i] = Tensor({d});
        }
        p.mixer_w = rng.normal_tensor({d, d}, 1.0 / std::sqrt(static_cast<double>(d)));
        p.mixer_b = Tensor({d});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        for (std::size_t i = 0; i < 3; ++i) {
            const std::string k = std::to_string(kTemporalKernels[i]);
            reg.add(prefix + ".dconv" + k + "_w", dconv_w[i]);
            reg.add(prefix + ".dconv" + k + "_b", dconv_b[i]);
            reg.add(prefix + ".gconv" + k + "_w", gconv_w[i]);
            reg.add(prefix + ".gconv" + k + "_b", gconv_b[i]);
        }
        reg.add(prefix + ".mixer_w", mixer_w);
        reg.add(prefix + ".mixer_b", mixer_b);
    }
};

/// h_t = mixer( sum_k DConv_k(Z) * sigmoid(GDConv_k(Z)) ), dilation = k.
inline Var temporal_expert(Graph& g, const ParamBinding& pb, const TemporalExpertParams& p,
                           Var z /* B,P,D */, ConvPad pad = ConvPad::same) {
    Var acc = -1;
    bool first = true;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t k = kTemporalKernels[i];
        Var val = conv1d(g, z, pb(p.dconv_w[i]), pb(p.dconv_b[i]), k, pad);
        Var gate = sigmoid(g, conv1d(g, z, pb(p.gconv_w[i]), pb(p.gconv_b[i]), k, pad));
        Var branch = mul(g, val, gate);
        acc = first ? branch : add(g, acc, branch);
        first = false;
    }
    return affine3(g, acc, pb(p.mixer_w), pb(p.mixer_b));
}

// ---------------------------------------------------------------------------
// Channel expert: learned dynamic adjacency over channel slices
// ---------------------------------------------------------------------------

struct ChannelExpertParams {
    std::size_t n_channels = 1;
    Tensor scorer_w1, scorer_b1; // [z_i ; z_j ; dt] -> hidden
    Tensor scorer_w2, scorer_b2; // hidden -> scalar score
    Tensor mixer_w, mixer_b;     // per-slice value mixer (shared D/N x D/N block),
                                 // keeps the expert permutation-equivariant

    static ChannelExpertParams init(std::size_t d, std::size_t n, RngStream& rng) {
        if (n < 1 || d % n != 0)
            throw std::invalid_argument("ChannelExpertParams: model width " + std::to_string(d) +
                                        " must be divisible by channel count " + std::to_string(n));
        ChannelExpertParams p;
        p.n_channels = n;
        const std::size_t dc = d / n;
        const std::size_t in = 2 * dc + 1;
        const std::size_t hidden = std::max<std::size_t>(4, dc);
        p.scorer_w1 = rng.normal_tensor({in, hidden}, 1.0 / std::sqrt(static_cast<double>(in)));
        p.scorer_b1 = Tensor({hidden});
        p.scorer_w2 = rng.normal_tensor({hidden, 1}, 1.0 / std::sqrt(static_cast<double>(hidden)));
        p.scorer_b2 = Tensor({1});
        p.mixer_w = rng.normal_tensor({dc, dc}, 1.0 / std::sqrt(static_cast<double>(dc)));
        p.mixer_b = Tensor({dc});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".scorer_w1", scorer_w1);
        reg.add(prefix + ".scorer_b1", scorer_b1);
        reg.add(prefix + ".scorer_w2", scorer_w2);
        reg.add(prefix + ".scorer_b2", scorer_b2);
        reg.add(prefix + ".mixer_w", mixer_w);
        reg.add(prefix + ".mixer_b", mixer_b);
    }
};

struct ChannelExpertOut {
    Var mixed;     // B,P,D
    Var adjacency; // B,P,N,N row-stochastic
};

/// A_ij = MLP(z_i | z_j | dt_ij) row-softmaxed; channel slices are the N
/// contiguous D/N blocks of the model width. dt is fixed at zero for aligned
/// sampling but keeps its input slot.
inline ChannelExpertOut channel_expert(Graph& g, const ParamBinding& pb, const ChannelExpertParams& p,
                                       Var z /* B,P,D */) {
    const Tensor& tz = g.value(z);
    const std::size_t B = tz.dim(0), P = tz.dim(1), D = tz.dim(2);
    const std::size_t N = p.n_channels;
    if (D % N != 0)
        throw ShapeError("channel_expert: width " + std::to_string(D) + " not divisible by channels " +
                         std::to_string(N));
    const std::size_t dc = D / N;

    std::vector<Var> slices;
    slices.reserve(N);
    for (std::size_t i = 0; i < N; ++i) slices.push_back(slice(g, z, 2, i * dc, dc));
    Var dt = g.constant(Tensor({B, P, 1})); // delta-t slot, zero for aligned observations

    std::vector<Var> pair_feats;
    pair_feats.reserve(N * N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) {
            Var cat = concat(g, {slices[i], slices[j], dt}, 2);          // B,P,2dc+1
            pair_feats.push_back(reshape(g, cat, {B, P, 1, 2 * dc + 1}));
        }
    Var feats = concat(g, pair_feats, 2);                                 // B,P,N*N,2dc+1
    Var flat = reshape(g, feats, {B * P * N * N, 2 * dc + 1});
    Var hidden = gelu(g, affine(g, flat, pb(p.scorer_w1), pb(p.scorer_b1)));
    Var scores = affine(g, hidden, pb(p.scorer_w2), pb(p.scorer_b2));     // B*P*N*N, 1
    Var a = softmax_rows(g, reshape(g, scores, {B, P, N, N}));            // rows over j

    Var zs = reshape(g, z, {B * P, N, dc});
    Var mixed = bmm(g, reshape(g, a, {B * P, N, N}), zs);                 // B*P, N, dc
    Var value = affine(g, reshape(g, mixed, {B * P * N, dc}), pb(p.mixer_w), pb(p.mixer_b));
    ChannelExpertOut out;
    out.adjacency = a;
    out.mixed = reshape(g, value, {B, P, D});
    return out;
}

// ---------------------------------------------------------------------------
// Gated expert fusion with skip connection
// ---------------------------------------------------------------------------

struct FusionGateParams {
    Tensor w1, b1, w2, b2; // pooled context -> hidden -> per-feature gate

    static FusionGateParams init(std::size_t d, RngStream& rng) {
        FusionGateParams p;
        p.w1 = rng.normal_tensor({d, d}, 1.0 / std::sqrt(static_cast<double>(d)));
        p.b1 = Tensor({d});
        p.w2 = rng.normal_tensor({d, d}, 1.0 / std::sqrt(static_cast<double>(d)));
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

struct ExpertFusionOut {
    Var fused; // g*h_t + (1-g)*h_c + Z
    Var gate;  // B,1,D per-(batch,feature) gate broadcast over tokens
};

/// g = sigmoid(MLP2(GELU(MLP1(mean_tokens(Z))))); output keeps the skip.
inline ExpertFusionOut fuse_experts(Graph& g, const ParamBinding& pb, const FusionGateParams& p, Var h_t,
                                    Var h_c, Var z) {
    if (!(g.value(h_t).same_shape(g.value(h_c)) && g.value(h_t).same_shape(g.value(z))))
        throw ShapeError("fuse_experts: shapes differ: " + shape_str(g.value(h_t).shape()) + " vs " +
                         shape_str(g.value(h_c).shape()) + " vs " + shape_str(g.value(z).shape()));
    const Tensor& tz = g.value(z);
    const std::size_t B = tz.dim(0), D = tz.dim(2);
    Var zbar = reshape(g, reduce_mean(g, z, {1}, false), {B, D});
    Var gate2 = sigmoid(g, affine(g, gelu(g, affine(g, zbar, pb(p.w1), pb(p.b1))), pb(p.w2), pb(p.b2)));
    Var gate = reshape(g, gate2, {B, 1, D});
    Var one_minus = add_scalar(g, mul_scalar(g, gate, -1.0), 1.0);
    ExpertFusionOut out;
    out.gate = gate;
    out.fused = add(g, add(g, mul(g, gate, h_t), mul(g, one_minus, h_c)), z);
    return out;
}

} // namespace model
} // namespace ddt

#endif
