#ifndef DDT_MODEL_FORECASTER_HPP
#define DDT_MODEL_FORECASTER_HPP

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ddt/model/params.hpp"
#include "ddt/ops.hpp"
#include "ddt/rng.hpp"

namespace ddt {
namespace model {

inline constexpr std::size_t kDirectHorizonLimit = 96;

/// Output-head configuration. Horizons at or below 96 use the direct
/// projection; longer ones generate recursively.
struct HeadConfig {
    std::size_t horizon = 24;
    std::vector<double> quantiles = {0.1, 0.5, 0.9};
    double teacher_forcing_ratio = 0.0;
    bool force_direct = false;    // explicit override of the routing rule
    bool force_recursive = false; // (tests and config may set exactly one)

    bool use_direct() const {
        if (force_direct) return true;
        if (force_recursive) return false;
        return horizon <= kDirectHorizonLimit;
    }

    std::size_t median_index() const {
        for (std::size_t i = 0; i < quantiles.size(); ++i)
            if (quantiles[i] == 0.5) return i;
        return quantiles.size() / 2;
    }

    void validate() const {
        if (horizon < 1) throw std::invalid_argument("HeadConfig: horizon must be >= 1");
        if (quantiles.empty()) throw std::invalid_argument("HeadConfig: need at least one quantile");
        for (std::size_t i = 0; i < quantiles.size(); ++i) {
            if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0))
                throw std::invalid_argument("HeadConfig: quantiles must lie in (0,1)");
            if (i && !(quantiles[i] > quantiles[i - 1]))
                throw std::invalid_argument("HeadConfig: quantiles must be strictly increasing");
        }
        if (force_direct && force_recursive)
            throw std::invalid_argument("HeadConfig: cannot force both head modes");
        if (teacher_forcing_ratio < 0.0 || teacher_forcing_ratio > 1.0)
            throw std::invalid_argument("HeadConfig: teacher_forcing_ratio must be in [0,1]");
    }
};

// ---------------------------------------------------------------------------
// Losses and metrics
// ---------------------------------------------------------------------------

/// Mean pinball loss over all elements and quantiles:
/// L_q(u) = max(q u, (q-1) u) with u = y - yhat_q.
inline Var quantile_loss(Graph& g, Var yhat /* ...xQ */, Var y /* ... */,
                         const std::vector<double>& quantiles) {
    const Tensor& th = g.value(yhat);
    const std::size_t q = quantiles.size();
    if (th.dim(th.rank() - 1) != q)
        throw ShapeError("quantile_loss: last axis of " + shape_str(th.shape()) + " must equal quantile count " +
                         std::to_string(q));
    Shape yshape = g.value(y).shape();
    yshape.push_back(1);
    Var u = sub(g, reshape(g, y, yshape), yhat); // broadcasts over the quantile axis
    Tensor qv({q}), qm1({q});
    for (std::size_t i = 0; i < q; ++i) {
        qv[i] = quantiles[i];
        qm1[i] = quantiles[i] - 1.0;
    }
    Var lo = mul(g, u, g.constant(qv));
    Var hi = mul(g, u, g.constant(qm1));
    return mean_all(g, maximum(g, lo, hi));
}

struct Metrics {
    double mse = 0;
    double mae = 0;
};

/// Plain MSE/MAE means over all predicted elements.
inline Metrics metrics(const Tensor& yhat_median, const Tensor& y) {
    if (!yhat_median.same_shape(y))
        throw ShapeError("metrics: prediction " + shape_str(yhat_median.shape()) + " vs truth " +
                         shape_str(y.shape()));
    Metrics m;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const double d = y[i] - yhat_median[i];
        m.mse += d * d;
        m.mae += std::abs(d);
    }
    m.mse /= static_cast<double>(y.numel());
    m.mae /= static_cast<double>(y.numel());
    return m;
}

// ---------------------------------------------------------------------------
// Direct head
// ---------------------------------------------------------------------------

struct DirectHeadParams {
    Tensor w, b;
    std::size_t horizon = 0, n_out = 0, n_q = 0;

    static DirectHeadParams init(std::size_t tokens, std::size_t d_model, std::size_t horizon,
                                 std::size_t n_out, std::size_t n_q, RngStream& rng) {
        DirectHeadParams p;
        p.horizon = horizon;
        p.n_out = n_out;
        p.n_q = n_q;
        const std::size_t in = tokens * d_model;
        p.w = rng.normal_tensor({in, horizon * n_out * n_q}, 1.0 / std::sqrt(static_cast<double>(in)));
        p.b = Tensor({horizon * n_out * n_q});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".w", w);
        reg.add(prefix + ".b", b);
    }
};

/// Affine map from the flattened final encoder tokens to B x H x N x Q.
inline Var forecast_direct(Graph& g, const ParamBinding& pb, const DirectHeadParams& p,
                           Var encoding /* B,P,D */, const HeadConfig& cfg) {
    if (!cfg.use_direct() || (cfg.horizon > kDirectHorizonLimit && !cfg.force_direct))
        throw std::invalid_argument("forecast_direct: horizon " + std::to_string(cfg.horizon) +
                                    " is routed to the recursive head (H <= 96 rule)");
    const Tensor& t = g.value(encoding);
    const std::size_t B = t.dim(0), P = t.dim(1), D = t.dim(2);
    Var flat = reshape(g, encoding, {B, P * D});
    Var out = affine(g, flat, pb(p.w), pb(p.b));
    return reshape(g, out, {B, p.horizon, p.n_out, p.n_q});
}

// ---------------------------------------------------------------------------
// Recursive head (LSTM unrolled over the horizon)
// ---------------------------------------------------------------------------

struct RecursiveHeadParams {
    Tensor w_in, b_in;  // previous median (N) -> D
    Tensor w_ih, w_hh;  // D -> 4D gate blocks [i, f, o, c]
    Tensor b_gates;     // 4D, forget block initialized to 1
    Tensor w_out, b_out; // D -> N*Q
    std::size_t n_out = 0, n_q = 0, d_model = 0;

    static RecursiveHeadParams init(std::size_t d_model, std::size_t n_out, std::size_t n_q,
                                    RngStream& rng) {
        RecursiveHeadParams p;
        p.n_out = n_out;
        p.n_q = n_q;
        p.d_model = d_model;
        p.w_in = rng.normal_tensor({n_out, d_model}, 1.0 / std::sqrt(static_cast<double>(n_out)));
        p.b_in = Tensor({d_model});
        p.w_ih = rng.normal_tensor({d_model, 4 * d_model}, 1.0 / std::sqrt(static_cast<double>(d_model)));
        p.w_hh = rng.normal_tensor({d_model, 4 * d_model}, 1.0 / std::sqrt(static_cast<double>(d_model)));
        p.b_gates = Tensor({4 * d_model});
        for (std::size_t i = d_model; i < 2 * d_model; ++i) p.b_gates[i] = 1.0; // forget-gate bias
        p.w_out = rng.normal_tensor({d_model, n_out * n_q}, 1.0 / std::sqrt(static_cast<double>(d_model)));
        p.b_out = Tensor({n_out * n_q});
        return p;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".w_in", w_in);
        reg.add(prefix + ".b_in", b_in);
        reg.add(prefix + ".w_ih", w_ih);
        reg.add(prefix + ".w_hh", w_hh);
        reg.add(prefix + ".b_gates", b_gates);
        reg.add(prefix + ".w_out", w_out);
        reg.add(prefix + ".b_out", b_out);
    }
};

/// One LSTM cell step; gates laid out as [input, forget, output, candidate].
inline void lstm_step(Graph& g, const ParamBinding& pb, const RecursiveHeadParams& p, Var x, Var& h,
                      Var& c) {
    const std::size_t D = p.d_model;
    Var gates = add(g, add(g, matmul(g, x, pb(p.w_ih)), matmul(g, h, pb(p.w_hh))), pb(p.b_gates));
    Var gi = sigmoid(g, slice(g, gates, 1, 0, D));
    Var gf = sigmoid(g, slice(g, gates, 1, D, D));
    Var go = sigmoid(g, slice(g, gates, 1, 2 * D, D));
    Var gc = tanh_op(g, slice(g, gates, 1, 3 * D, D));
    c = add(g, mul(g, gf, c), mul(g, gi, gc));
    h = mul(g, go, tanh_op(g, c));
}

enum class HeadMode { train, eval };

/// Iterative generation: the pooled encoder output seeds the hidden state,
/// each step consumes the previous median (or, during training, the ground
/// truth with probability teacher_forcing_ratio).
inline Var forecast_recursive(Graph& g, const ParamBinding& pb, const RecursiveHeadParams& p,
                              Var encoding /* B,P,D */, Var last_observed /* B,N */, const HeadConfig& cfg,
                              const Tensor* targets /* B,H,N or null */, RngStream& rng, HeadMode mode) {
    if (cfg.use_direct() && !cfg.force_recursive)
        throw std::invalid_argument("forecast_recursive: horizon " + std::to_string(cfg.horizon) +
                                    " is routed to the direct head (H <= 96 rule)");
    const double tf = mode == HeadMode::train ? cfg.teacher_forcing_ratio : 0.0;
    if (tf > 0.0 && targets == nullptr)
        throw std::invalid_argument("forecast_recursive: teacher forcing requires targets in training mode");

    const Tensor& te = g.value(encoding);
    const std::size_t B = te.dim(0), D = te.dim(2);
    Var h = reshape(g, reduce_mean(g, encoding, {1}, false), {B, D}); // pooled initial state
    Var c = g.constant(Tensor({B, D}));
    Var prev = last_observed;

    std::vector<Var> steps;
    steps.reserve(cfg.horizon);
    for (std::size_t s = 0; s < cfg.horizon; ++s) {
        Var x = affine(g, prev, pb(p.w_in), pb(p.b_in));
        lstm_step(g, pb, p, x, h, c);
        Var y = affine(g, h, pb(p.w_out), pb(p.b_out)); // B, N*Q
        Var y4 = reshape(g, y, {B, 1, p.n_out, p.n_q});
        steps.push_back(y4);
        if (s + 1 == cfg.horizon) break;
        const bool use_truth = tf > 0.0 && rng.uniform() < tf;
        if (use_truth) {
            Tensor truth({B, p.n_out});
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t n = 0; n < p.n_out; ++n)
                    truth.at2(b, n) = targets->at3(b, s, n);
            prev = g.constant(truth);
        } else {
            Var med = slice(g, y4, 3, cfg.median_index(), 1);
            prev = reshape(g, med, {B, p.n_out});
        }
    }
    return concat(g, steps, 1); // B, H, N, Q
}

} // namespace model
} // namespace ddt

#endif
