#ifndef DDT_MODEL_PATCHING_HPP
#define DDT_MODEL_PATCHING_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ddt/model/params.hpp"
#include "ddt/ops.hpp"
#include "ddt/rng.hpp"

namespace ddt {
namespace model {

// ---------------------------------------------------------------------------
// Patch extraction
// ---------------------------------------------------------------------------

struct PatchConfig {
    std::size_t patch_len = 16; // K
    std::size_t stride = 8;     // S

    void validate(std::size_t seq_len) const {
        if (stride < 1 || stride > patch_len)
            throw std::invalid_argument("PatchConfig: need 1 <= S <= K, got S=" + std::to_string(stride) +
                                        " K=" + std::to_string(patch_len));
        if (patch_len > seq_len)
            throw std::invalid_argument("PatchConfig: patch length " + std::to_string(patch_len) +
                                        " exceeds sequence length " + std::to_string(seq_len));
    }
};

struct PatchGeometry {
    std::size_t count = 0;        // P
    std::size_t padded_len = 0;   // smallest length >= L with (len - K) % S == 0
    std::size_t pad_tail = 0;     // zero-padded positions at the end
    std::vector<std::size_t> starts;
};

inline PatchGeometry patch_geometry(std::size_t seq_len, const PatchConfig& cfg) {
    cfg.validate(seq_len);
    PatchGeometry geo;
    std::size_t padded = seq_len;
    while ((padded - cfg.patch_len) % cfg.stride != 0) ++padded;
    geo.padded_len = padded;
    geo.pad_tail = padded - seq_len;
    geo.count = (padded - cfg.patch_len) / cfg.stride + 1;
    for (std::size_t p = 0; p < geo.count; ++p) geo.starts.push_back(p * cfg.stride);
    return geo;
}

/// Slide the window over (B, L, N): X_patches[b,p,:,:] = X[b, pS : pS+K, :],
/// zero-padding the tail. Output B x P x K x N.
inline Var extract_patches(Graph& g, Var x, const PatchConfig& cfg) {
    const Tensor& t = g.value(x);
    if (t.rank() != 3) throw ShapeError("extract_patches: expected B x L x N, got " + shape_str(t.shape()));
    const std::size_t B = t.dim(0), L = t.dim(1), N = t.dim(2);
    PatchGeometry geo = patch_geometry(L, cfg);
    Var padded = x;
    if (geo.pad_tail > 0) padded = concat(g, {x, g.constant(Tensor({B, geo.pad_tail, N}))}, 1);
    std::vector<Var> parts;
    parts.reserve(geo.count);
    for (std::size_t p = 0; p < geo.count; ++p) {
        Var sl = slice(g, padded, 1, geo.starts[p], cfg.patch_len);
        parts.push_back(reshape(g, sl, {B, 1, cfg.patch_len, N}));
    }
    return concat(g, parts, 1);
}

inline Tensor extract_patches(const Tensor& x, const PatchConfig& cfg) {
    Graph g;
    return g.value(extract_patches(g, g.constant(x), cfg));
}

/// Overlap-averaging reconstruction: each source position takes the mean of
/// every patch copy covering it. Exact on the unpadded region for any S <= K.
inline Tensor unpatch_average(const Tensor& patches, std::size_t seq_len, const PatchConfig& cfg) {
    if (patches.rank() != 4) throw ShapeError("unpatch_average: expected B x P x K x N");
    const std::size_t B = patches.dim(0), P = patches.dim(1), K = patches.dim(2), N = patches.dim(3);
    Tensor out({B, seq_len, N});
    std::vector<double> hits(seq_len, 0.0);
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t j = 0; j < K; ++j) {
            const std::size_t t = p * cfg.stride + j;
            if (t < seq_len) hits[t] += 1.0;
        }
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t j = 0; j < K; ++j) {
                const std::size_t t = p * cfg.stride + j;
                if (t >= seq_len) continue;
                for (std::size_t n = 0; n < N; ++n) out.at3(b, t, n) += patches.at4(b, p, j, n);
            }
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < seq_len; ++t)
            for (std::size_t n = 0; n < N; ++n) out.at3(b, t, n) /= hits[t];
    return out;
}

// ---------------------------------------------------------------------------
// Temporal-aware layer normalization
// ---------------------------------------------------------------------------

struct TLayerNormParams {
    Tensor scale, shift; // per feature (N)

    static TLayerNormParams init(std::size_t n) {
        TLayerNormParams p;
        p.scale = Tensor::full({n}, 1.0);
        p.shift = Tensor({n});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".scale", scale);
        reg.add(prefix + ".shift", shift);
    }
};

/// Normalize each patch over its joint K x N extent (Eq-style moments over
/// both time and feature axes), then apply the learned per-feature affine.
inline Var t_layernorm(Graph& g, const ParamBinding& pb, const TLayerNormParams& p, Var patches,
                       double eps = 1e-5) {
    const Tensor& t = g.value(patches);
    if (t.rank() != 4) throw ShapeError("t_layernorm: expected B x P x K x N, got " + shape_str(t.shape()));
    Var mu = reduce_mean(g, patches, {2, 3}, true);
    Var centered = sub(g, patches, mu);
    Var var = reduce_mean(g, mul(g, centered, centered), {2, 3}, true);
    Var normed = div_op(g, centered, sqrt_op(g, add_scalar(g, var, eps)));
    return add(g, mul(g, normed, pb(p.scale)), pb(p.shift));
}

/// Normalization-only variant for moment checks.
inline Tensor t_layernorm_moments(const Tensor& patches, double eps = 1e-5) {
    Graph g;
    TLayerNormParams p = TLayerNormParams::init(patches.dim(3));
    ParamRegistry reg;
    p.register_params(reg, "tln");
    ParamBinding pb(g, reg);
    return g.value(t_layernorm(g, pb, p, g.constant(patches), eps));
}

// ---------------------------------------------------------------------------
// Dynamic positional encoding
// ---------------------------------------------------------------------------

/// Sinusoidal codes whose wavelengths span [1, 2P] (geometric), so any patch
/// count occupies the full phase range instead of the fixed-1e4 convention.
inline Tensor positional_encode(std::size_t count, std::size_t d_model) {
    if (count < 1) throw std::invalid_argument("positional_encode: need at least one position");
    if (d_model < 2 || d_model % 2 != 0)
        throw std::invalid_argument("positional_encode: model width must be even and >= 2");
    const std::size_t pairs = d_model / 2;
    Tensor pe({count, d_model});
    const double lmax = 2.0 * static_cast<double>(count);
    for (std::size_t i = 0; i < pairs; ++i) {
        const double frac = pairs == 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(pairs - 1);
        const double wavelength = std::pow(lmax, frac);
        for (std::size_t p = 0; p < count; ++p) {
            const double phase = static_cast<double>(p) / wavelength;
            pe.at2(p, 2 * i) = std::sin(phase);
            pe.at2(p, 2 * i + 1) = std::cos(phase);
        }
    }
    return pe;
}

// ---------------------------------------------------------------------------
// Bottleneck projection
// ---------------------------------------------------------------------------

struct BottleneckParams {
    Tensor w1, b1; // in -> 2*d_model
    Tensor w2, b2; // 2*d_model -> d_model

    static BottleneckParams init(std::size_t in, std::size_t d_model, RngStream& rng) {
        BottleneckParams p;
        p.w1 = rng.normal_tensor({in, 2 * d_model}, 1.0 / std::sqrt(static_cast<double>(in)));
        p.b1 = Tensor({2 * d_model});
        p.w2 = rng.normal_tensor({2 * d_model, d_model}, 1.0 / std::sqrt(static_cast<double>(2 * d_model)));
        p.b2 = Tensor({d_model});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".w1", w1);
        reg.add(prefix + ".b1", b1);
        reg.add(prefix + ".w2", w2);
        reg.add(prefix + ".b2", b2);
    }
};

/// Expand-contract projection of flattened patches: in -> 2*d_model -> d_model.
inline Var bottleneck_project(Graph& g, const ParamBinding& pb, const BottleneckParams& p,
                              Var patches_flat /* B,P,K*N */) {
    return affine3(g, gelu(g, affine3(g, patches_flat, pb(p.w1), pb(p.b1))), pb(p.w2), pb(p.b2));
}

// ---------------------------------------------------------------------------
// STMA temporal-distance bias
// ---------------------------------------------------------------------------

/// Log-spaced bucket index of a temporal distance: {0, 1, 2, 3-4, 5-8, ...}.
inline std::size_t stma_bucket(std::size_t distance) {
    if (distance <= 2) return distance;
    return 3 + static_cast<std::size_t>(
                   std::floor(std::log2(static_cast<double>(distance - 1) / 2.0)));
}

inline std::size_t stma_bucket_count(std::size_t count) {
    return count <= 1 ? 1 : stma_bucket(count - 1) + 1;
}

struct StmaBiasParams {
    Tensor bias; // one learned scalar per bucket

    static StmaBiasParams init(std::size_t count) {
        StmaBiasParams p;
        p.bias = Tensor({stma_bucket_count(count)});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) { reg.add(prefix + ".bias", bias); }
};

/// P x P bias matrix R with R[i][j] = bias[bucket(|i-j|)]; symmetric in
/// |i-j| by construction.
inline Var stma_bias(Graph& g, const ParamBinding& pb, const StmaBiasParams& p, std::size_t count) {
    std::vector<std::size_t> index(count * count);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < count; ++j)
            index[i * count + j] = stma_bucket(i >= j ? i - j : j - i);
    return gather_index(g, pb(p.bias), std::move(index), {count, count});
}

} // namespace model
} // namespace ddt

#endif
