#ifndef DDT_MODEL_MASKING_HPP
#define DDT_MODEL_MASKING_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ddt/fft.hpp"
#include "ddt/model/params.hpp"
#include "ddt/ops.hpp"
#include "ddt/rng.hpp"

namespace ddt {
namespace model {

inline constexpr double kMaskEps = 1e-8; // log(M_dynamic + eps) singularity guard

// ---------------------------------------------------------------------------
// Causal mask
// ---------------------------------------------------------------------------

/// T x T additive mask: 0 where the key time j <= query time i, -inf above
/// the diagonal.
inline Tensor build_causal_mask(std::size_t t_len) {
    if (t_len < 1) throw std::invalid_argument("build_causal_mask: length must be >= 1");
    Tensor m({t_len, t_len});
    for (std::size_t i = 0; i < t_len; ++i)
        for (std::size_t j = i + 1; j < t_len; ++j) m.at2(i, j) = kNegInf;
    return m;
}

/// Strictly-past competition mask for dynamic-mask sampling: only j < i is
/// open; the diagonal is excluded from the Top-k competition.
inline Tensor build_strict_past_mask(std::size_t t_len) {
    Tensor m({t_len, t_len});
    for (std::size_t i = 0; i < t_len; ++i)
        for (std::size_t j = 0; j < t_len; ++j)
            if (j >= i) m.at2(i, j) = kNegInf;
    return m;
}

/// Diagonal-only exclusion, used when the causal restriction is ablated.
inline Tensor build_offdiag_mask(std::size_t t_len) {
    Tensor m({t_len, t_len});
    for (std::size_t i = 0; i < t_len; ++i) m.at2(i, i) = kNegInf;
    return m;
}

// ---------------------------------------------------------------------------
// Spectral features
// ---------------------------------------------------------------------------

/// Normalized channel energy weights w_n = |x_:,n|_2 / sum_i |x_:,i|_2 over
/// an L x N slice. Falls back to uniform when all channels are zero.
inline std::vector<double> channel_energy_weights(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("channel_energy_weights: expected L x N, got " + shape_str(x.shape()));
    const std::size_t L = x.dim(0), N = x.dim(1);
    std::vector<double> w(N, 0.0);
    double total = 0;
    for (std::size_t n = 0; n < N; ++n) {
        double s = 0;
        for (std::size_t t = 0; t < L; ++t) s += x.at2(t, n) * x.at2(t, n);
        w[n] = std::sqrt(s);
        total += w[n];
    }
    if (total <= 0) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(N));
        return w;
    }
    for (auto& v : w) v /= total;
    return w;
}

namespace detail {

/// Energy-weighted one-sided short-time spectrum magnitudes over a window
/// covering source positions [lo, hi) centered at `center`; positions
/// outside [lo, hi) contribute zeros.
inline void window_spectrum(const Tensor& x /* L x N */, const std::vector<double>& w,
                            std::ptrdiff_t center, std::size_t window, std::ptrdiff_t lo, std::ptrdiff_t hi,
                            double* out /* window/2 + 1 */) {
    const std::size_t N = x.dim(1);
    const std::size_t half = window / 2;
    std::vector<double> buf(window);
    const std::size_t bins = window / 2 + 1;
    std::vector<double> acc(bins, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t j = 0; j < window; ++j) {
            const std::ptrdiff_t t = center - static_cast<std::ptrdiff_t>(half) + static_cast<std::ptrdiff_t>(j);
            buf[j] = (t >= lo && t < hi) ? x.at2(static_cast<std::size_t>(t), n) : 0.0;
        }
        auto spec = fft_1d(buf);
        for (std::size_t k = 0; k < bins; ++k) acc[k] += w[n] * std::abs(spec[k]);
    }
    for (std::size_t k = 0; k < bins; ++k) out[k] = std::log1p(acc[k]);
}

} // namespace detail

/// Per-timestep feature vectors F_t: the value vector at t concatenated with
/// log-compressed, energy-weighted short-time spectrum magnitudes over a
/// centered window (zero-padded at the series edges).
/// Output: B x L x d_f with d_f = N + window/2 + 1.
inline Tensor spectral_features(const Tensor& x, std::size_t window = 16) {
    if (x.rank() != 3) throw ShapeError("spectral_features: expected B x L x N, got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), L = x.dim(1), N = x.dim(2);
    if (window < 2 || window > L)
        throw std::invalid_argument("spectral_features: window must be in [2, L]");
    const std::size_t bins = window / 2 + 1;
    Tensor f({B, L, N + bins});
    for (std::size_t b = 0; b < B; ++b) {
        Tensor slice_bn({L, N});
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t n = 0; n < N; ++n) slice_bn.at2(t, n) = x.at3(b, t, n);
        const std::vector<double> w = channel_energy_weights(slice_bn);
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t n = 0; n < N; ++n) f.at3(b, t, n) = x.at3(b, t, n);
            detail::window_spectrum(slice_bn, w, static_cast<std::ptrdiff_t>(t), window, 0,
                                    static_cast<std::ptrdiff_t>(L), f.data() + (b * L + t) * (N + bins) + N);
        }
    }
    return f;
}

/// Patch-token features for the encoder mask: one vector per patch, built
/// from the patch's own coverage only (the window is clamped to the patch so
/// token p never sees beyond its last covered timestep).
inline Tensor patch_spectral_features(const Tensor& x /* B x L x N */, const std::vector<std::size_t>& starts,
                                      std::size_t patch_len, std::size_t window = 16) {
    if (x.rank() != 3) throw ShapeError("patch_spectral_features: expected B x L x N");
    const std::size_t B = x.dim(0), L = x.dim(1), N = x.dim(2);
    const std::size_t P = starts.size();
    const std::size_t bins = window / 2 + 1;
    Tensor f({B, P, N + bins});
    for (std::size_t b = 0; b < B; ++b) {
        Tensor full({L, N});
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t n = 0; n < N; ++n) full.at2(t, n) = x.at3(b, t, n);
        for (std::size_t p = 0; p < P; ++p) {
            const std::size_t s = starts[p];
            const std::size_t e = std::min(s + patch_len, L); // exclude the zero-padded tail
            Tensor cov({e - s, N});
            for (std::size_t t = s; t < e; ++t)
                for (std::size_t n = 0; n < N; ++n) cov.at2(t - s, n) = x.at3(b, t, n);
            const std::vector<double> w = channel_energy_weights(cov);
            const std::size_t center = std::min(s + patch_len / 2, e - 1);
            for (std::size_t n = 0; n < N; ++n) f.at3(b, p, n) = x.at3(b, center, n);
            detail::window_spectrum(full, w, static_cast<std::ptrdiff_t>(center), window,
                                    static_cast<std::ptrdiff_t>(s), static_cast<std::ptrdiff_t>(e),
                                    f.data() + (b * P + p) * (N + bins) + N);
        }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Mahalanobis metric
// ---------------------------------------------------------------------------

/// Trainable metric state plus the temperature schedule.
struct MetricState {
    Tensor l_offdiag;  // d_f x d_f, strict lower triangle used
    Tensor l_diag_raw; // d_f, softplus keeps the diagonal positive
    Tensor beta_raw;   // scalar; softplus(beta_raw) is the sharpness
    double tau0 = 1.0;
    double gamma = 0.95;
    int epoch = 0;

    double tau() const { return tau0 * std::pow(gamma, static_cast<double>(epoch)); }

    static MetricState init(std::size_t d_f, RngStream& rng) {
        MetricState ms;
        ms.l_offdiag = rng.normal_tensor({d_f, d_f}, 0.05);
        // softplus(0.5413...) = 1 -> start at the identity metric
        ms.l_diag_raw = Tensor::full({d_f}, 0.541324854612918);
        ms.beta_raw = Tensor({1}, {0.541324854612918}); // softplus -> beta = 1.0
        return ms;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".l_offdiag", l_offdiag);
        reg.add(prefix + ".l_diag_raw", l_diag_raw);
        reg.add(prefix + ".beta_raw", beta_raw);
    }
};

/// Effective Cholesky-style factor: strict lower triangle of l_offdiag plus
/// softplus of the stored diagonal, guaranteeing A = L^T L is SPD.
inline Var metric_factor(Graph& g, Var l_offdiag, Var l_diag_raw) {
    const std::size_t d = g.value(l_diag_raw).dim(0);
    Tensor strict({d, d});
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) strict.at2(i, j) = 1.0;
    Var masked = mul(g, l_offdiag, g.constant(strict));
    return add(g, masked, diag_embed(g, softplus(g, l_diag_raw)));
}

/// Off-tape effective factor, for eval-time mask construction.
inline Tensor metric_factor(const MetricState& ms) {
    const std::size_t d = ms.l_diag_raw.dim(0);
    Tensor l({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) l.at2(i, j) = ms.l_offdiag.at2(i, j);
        l.at2(i, i) = ddt::detail::softplus_s(ms.l_diag_raw[i]);
    }
    return l;
}

/// Pairwise Mahalanobis distances: d(t,t') = |L (F_t - F_t')|_2, computed
/// as sqrt of the squared-distance Gram expansion. The diagonal is exactly
/// zero (and kept out of the sqrt so gradients stay finite).
inline Var mahalanobis_matrix(Graph& g, Var features /* T x d_f */, Var l_factor) {
    const Tensor& f = g.value(features);
    if (f.rank() != 2) throw ShapeError("mahalanobis_matrix: expected T x d_f features");
    const std::size_t T = f.dim(0);
    Var gmat = matmul(g, features, l_factor, false, true); // T x d_f, rows L*F_t
    Var sq = reduce_sum(g, mul(g, gmat, gmat), {1}, true); // T x 1 row norms
    Var cross = matmul(g, gmat, gmat, false, true);        // T x T Gram
    Var d2 = sub(g, add(g, sq, reshape(g, sq, {1, T})), mul_scalar(g, cross, 2.0));
    // floor away negative round-off (and keep sqrt gradients finite when two
    // feature rows coincide), lift the diagonal to 1 before sqrt, then zero
    // it exactly
    Var d2c = maximum(g, d2, g.constant(Tensor::full({T, T}, 1e-24)));
    Tensor eye = Tensor::identity(T);
    Tensor offd = Tensor::full({T, T}, 1.0);
    for (std::size_t i = 0; i < T; ++i) offd.at2(i, i) = 0.0;
    Var lifted = add(g, d2c, g.constant(eye));
    return mul(g, sqrt_op(g, lifted), g.constant(offd));
}

inline Tensor mahalanobis_matrix(const Tensor& features, const Tensor& l_factor) {
    Graph g;
    return g.value(mahalanobis_matrix(g, g.constant(features), g.constant(l_factor)));
}

// ---------------------------------------------------------------------------
// Dynamic mask sampling
// ---------------------------------------------------------------------------

enum class MaskMode { train, eval };

struct MaskSampleConfig {
    std::size_t k = 8;           // per-row retention budget (diagonal included)
    double tau = 1.0;            // scheduled temperature tau0 * gamma^epoch
    bool causal_restrict = true; // false reproduces the causality-violating ablation
    MaskMode mode = MaskMode::train;
    bool relaxed_forward = false; // downstream consumes P-hat instead of the hard mask
};

struct DynamicMask {
    Tensor hard;  // T x T in {0,1}; row t holds min(k, t+1) ones under causal restriction
    Var relaxed;  // on-tape P-hat (probability rows over the competition support)
    Var on_tape;  // straight-through(hard, P-hat), or P-hat in relaxed mode
    std::size_t k = 0;
};

/// Gumbel-Softmax Top-k sampling of the dynamic mask from distance logits
/// -beta * d(t,t'). The diagonal never competes but is always kept in the
/// hard mask; under causal restriction row t draws from strictly-past
/// positions only, so it ends up with exactly min(k, t+1) ones.
inline DynamicMask sample_dynamic_mask(Graph& g, Var distances, Var beta_raw, const MaskSampleConfig& cfg,
                                       RngStream& rng) {
    if (cfg.k < 1) throw std::invalid_argument("sample_dynamic_mask: k must be >= 1");
    const Tensor& d = g.value(distances);
    if (d.rank() != 2 || d.dim(0) != d.dim(1))
        throw ShapeError("sample_dynamic_mask: expected square distances, got " + shape_str(d.shape()));
    const std::size_t T = d.dim(0);

    Var beta = softplus(g, beta_raw);
    Var logits = mul(g, distances, mul_scalar(g, beta, -1.0)); // broadcast scalar
    if (cfg.mode == MaskMode::train) logits = add(g, logits, g.constant(rng.gumbel_tensor({T, T})));
    const double tau = cfg.mode == MaskMode::eval ? std::max(cfg.tau, 1e-3) : cfg.tau;
    logits = mul_scalar(g, logits, 1.0 / tau);
    logits = add(g, logits,
                 g.constant(cfg.causal_restrict ? build_strict_past_mask(T) : build_offdiag_mask(T)));

    Var phat = softmax_rows(g, logits);
    if (cfg.causal_restrict) {
        // row 0 has no strictly-past support; pin it to the self position
        Tensor e00({T, T});
        e00.at2(0, 0) = 1.0;
        phat = add(g, phat, g.constant(e00));
    }

    // Hard Top-k per row over the competition support, diagonal forced on.
    // Ranking uses the pre-softmax logits: softmax is monotone per row, so
    // this is the Top-k of P-hat, but it survives the probability underflow
    // at small temperatures (argmax convergence as tau -> 0).
    const Tensor& lv = g.value(logits);
    Tensor hard({T, T});
    for (std::size_t t = 0; t < T; ++t) {
        hard.at2(t, t) = 1.0;
        const std::size_t need = cfg.causal_restrict ? std::min(cfg.k, t + 1) : std::min(cfg.k, T);
        if (need <= 1) continue;
        std::vector<std::size_t> cand;
        if (cfg.causal_restrict) {
            for (std::size_t j = 0; j < t; ++j) cand.push_back(j);
        } else {
            for (std::size_t j = 0; j < T; ++j)
                if (j != t) cand.push_back(j);
        }
        std::stable_sort(cand.begin(), cand.end(),
                         [&](std::size_t a, std::size_t b) { return lv.at2(t, a) > lv.at2(t, b); });
        for (std::size_t i = 0; i < std::min(need - 1, cand.size()); ++i) hard.at2(t, cand[i]) = 1.0;
    }

    DynamicMask dm;
    dm.k = cfg.k;
    dm.hard = hard;
    dm.relaxed = phat;
    dm.on_tape = cfg.relaxed_forward ? phat : straight_through(g, phat, hard);
    return dm;
}

/// Top-k binarization of one probability row (library form of Eq. 11).
inline std::vector<double> topk_mask_row(const std::vector<double>& probs, std::size_t k) {
    std::vector<std::size_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    std::vector<double> out(probs.size(), 0.0);
    for (std::size_t i = 0; i < std::min(k, probs.size()); ++i) out[idx[i]] = 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Mask fusion and attention
// ---------------------------------------------------------------------------

/// Additive fused mask: M_causal + log(M_dynamic + eps). Hard-zero dynamic
/// entries contribute log(1e-8) = -18.42; causal -inf dominates regardless
/// of the dynamic value.
inline Var fuse_masks(Graph& g, const Tensor& causal, Var dynamic_on_tape) {
    Var logdyn = log_op(g, add_scalar(g, dynamic_on_tape, kMaskEps));
    return add(g, g.constant(causal), logdyn);
}

inline Tensor fuse_masks(const Tensor& causal, const Tensor& dynamic) {
    if (!causal.same_shape(dynamic))
        throw ShapeError("fuse_masks: causal " + shape_str(causal.shape()) + " vs dynamic " +
                         shape_str(dynamic.shape()));
    Tensor out = causal;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += std::log(dynamic[i] + kMaskEps);
    return out;
}

/// Single-head scaled-dot-product attention with an additive mask:
/// softmax(Q K^T / sqrt(d_k) + mask) V, all T x d_k.
inline Var masked_attention(Graph& g, Var q, Var k, Var v, Var additive_mask) {
    const Tensor& tq = g.value(q);
    if (tq.rank() != 2) throw ShapeError("masked_attention: expected T x d_k inputs");
    const double scale = 1.0 / std::sqrt(static_cast<double>(tq.dim(1)));
    Var scores = mul_scalar(g, matmul(g, q, k, false, true), scale);
    Var probs = softmax_rows(g, add(g, scores, additive_mask));
    return matmul(g, probs, v);
}

/// Batched multi-head attention over (B, T, D): D is split into `heads`
/// slices sharing one fused T x T mask (optionally plus a bias matrix).
inline Var masked_attention_heads(Graph& g, Var q, Var k, Var v, Var additive_mask, std::size_t heads) {
    const Tensor& tq = g.value(q);
    ddt::detail::check_same_rank3(tq, "masked_attention_heads");
    const std::size_t B = tq.dim(0), T = tq.dim(1), D = tq.dim(2);
    if (heads < 1 || D % heads != 0)
        throw ShapeError("masked_attention_heads: head count " + std::to_string(heads) +
                         " must divide model width " + std::to_string(D));
    const std::size_t hd = D / heads;
    auto split = [&](Var x) {
        Var r = reshape(g, x, {B, T, heads, hd});
        return reshape(g, permute(g, r, {0, 2, 1, 3}), {B * heads, T, hd});
    };
    Var qs = split(q), ks = split(k), vs = split(v);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Var scores = mul_scalar(g, bmm(g, qs, ks, false, true), scale); // (B*heads, T, T)
    Var masked = add(g, scores, reshape(g, additive_mask, {1, T, T}));
    Var probs = softmax_rows(g, masked);
    Var out = bmm(g, probs, vs); // (B*heads, T, hd)
    Var merged = permute(g, reshape(g, out, {B, heads, T, hd}), {0, 2, 1, 3});
    return reshape(g, merged, {B, T, D});
}

} // namespace model
} // namespace ddt

#endif
