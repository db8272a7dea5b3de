#ifndef DDT_MODEL_NETWORK_HPP
#define DDT_MODEL_NETWORK_HPP

#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddt/model/embedding.hpp"
#include "ddt/model/experts.hpp"
#include "ddt/model/forecaster.hpp"
#include "ddt/model/masking.hpp"
#include "ddt/model/params.hpp"
#include "ddt/model/patching.hpp"

namespace ddt {
namespace model {

/// Encoder mask wiring. `full` fuses the causal and dynamic masks;
/// `multivariate_only` also drops the channel expert (Table-II-style
/// ablation 1); `dynamic_only` removes the causal restriction everywhere
/// and is causality-violating by construction.
enum class Variant { full, multivariate_only, causal_only, dynamic_only };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::multivariate_only: return "no-dual-mask";
        case Variant::causal_only: return "causal-only";
        case Variant::dynamic_only: return "dynamic-only";
    }
    return "?";
}

struct ModelConfig {
    std::size_t input_len = 96;
    std::size_t n_targets = 1;
    std::size_t n_weather = 0;
    std::size_t embed_dim = 32; // D of the fused embedding
    std::size_t d_model = 64;   // patch-token width
    std::size_t heads = 4;
    PatchConfig patch{16, 8};
    std::size_t spectral_window = 16;
    std::size_t top_k = 0;        // 0 -> ceil(P / 4)
    std::size_t encoder_depth = 0; // 0 -> 2 blocks for L < 128, else 3
    double tau0 = 1.0;
    double gamma = 0.95;
    HeadConfig head;
    Variant variant = Variant::full;
    bool channel_expert = true;

    std::size_t resolved_depth() const {
        if (encoder_depth > 0) return encoder_depth;
        return input_len < 128 ? 2 : 3;
    }

    void validate() const {
        head.validate();
        patch.validate(input_len);
        if (n_targets < 1) throw std::invalid_argument("ModelConfig: need at least one target channel");
        const std::size_t n_vars = n_targets + n_weather;
        const std::size_t min_d =
            static_cast<std::size_t>(std::ceil(std::log2(std::max<double>(2.0, double(n_vars)))));
        if (embed_dim < min_d)
            throw std::invalid_argument("ModelConfig: embed_dim " + std::to_string(embed_dim) +
                                        " below ceil(log2(N)) = " + std::to_string(min_d));
        if (d_model % heads != 0)
            throw std::invalid_argument("ModelConfig: d_model must be divisible by heads");
        if (channel_expert && d_model % n_targets != 0)
            throw std::invalid_argument("ModelConfig: full-interaction mode needs d_model divisible by the "
                                        "target channel count " +
                                        std::to_string(n_targets));
        if (spectral_window < 2 || spectral_window > patch.patch_len)
            throw std::invalid_argument("ModelConfig: spectral window must lie in [2, patch_len] so patch "
                                        "features stay inside their own coverage");
    }
};

/// One training/evaluation batch, already standardized.
struct Batch {
    Tensor targets_in;  // B,L,Nt
    Tensor weather_in;  // B,L,Nw (numel 0 when absent)
    Tensor time_feats;  // B,L,5
    Tensor labels;      // B,H,Nt (empty at pure inference)
    Tensor last_value;  // B,Nt: final observed target values

    std::size_t batch_size() const { return targets_in.dim(0); }
};

struct EncoderBlockParams {
    Tensor ln1_scale, ln1_shift, ln2_scale, ln2_shift;
    Tensor wq, wk, wv, wo, attn_b;
    StmaBiasParams bias;
    Tensor ffn_gate_w, ffn_gate_b, ffn_val_w, ffn_val_b, ffn_out_w, ffn_out_b;

    static EncoderBlockParams init(std::size_t d, std::size_t p_count, RngStream& rng) {
        EncoderBlockParams b;
        b.ln1_scale = Tensor::full({d}, 1.0);
        b.ln1_shift = Tensor({d});
        b.ln2_scale = Tensor::full({d}, 1.0);
        b.ln2_shift = Tensor({d});
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        b.wq = rng.normal_tensor({d, d}, s);
        b.wk = rng.normal_tensor({d, d}, s);
        b.wv = rng.normal_tensor({d, d}, s);
        b.wo = rng.normal_tensor({d, d}, s);
        b.attn_b = Tensor({d});
        b.bias = StmaBiasParams::init(p_count);
        b.ffn_gate_w = rng.normal_tensor({d, 2 * d}, s);
        b.ffn_gate_b = Tensor({2 * d});
        b.ffn_val_w = rng.normal_tensor({d, 2 * d}, s);
        b.ffn_val_b = Tensor({2 * d});
        b.ffn_out_w = rng.normal_tensor({2 * d, d}, 1.0 / std::sqrt(static_cast<double>(2 * d)));
        b.ffn_out_b = Tensor({d});
        return b;
    }

    void register_params(ParamRegistry& reg, const std::string& prefix) {
        reg.add(prefix + ".ln1_scale", ln1_scale);
        reg.add(prefix + ".ln1_shift", ln1_shift);
        reg.add(prefix + ".ln2_scale", ln2_scale);
        reg.add(prefix + ".ln2_shift", ln2_shift);
        reg.add(prefix + ".wq", wq);
        reg.add(prefix + ".wk", wk);
        reg.add(prefix + ".wv", wv);
        reg.add(prefix + ".wo", wo);
        reg.add(prefix + ".attn_b", attn_b);
        bias.register_params(reg, prefix + ".stma");
        reg.add(prefix + ".ffn_gate_w", ffn_gate_w);
        reg.add(prefix + ".ffn_gate_b", ffn_gate_b);
        reg.add(prefix + ".ffn_val_w", ffn_val_w);
        reg.add(prefix + ".ffn_val_b", ffn_val_b);
        reg.add(prefix + ".ffn_out_w", ffn_out_w);
        reg.add(prefix + ".ffn_out_b", ffn_out_b);
    }
};

enum class RunMode { train, eval };

struct ForwardOut {
    Var prediction = -1;  // B,H,Nt,Q
    Var encoder_out = -1; // B,P,D_model after the masked attention stack
    Var expert_out = -1;  // after the dual-expert fusion
    std::vector<Var> param_leaves; // registry-ordered leaves for gradient readout
    std::vector<Tensor> hard_masks;    // per batch element (empty for causal-only)
    std::vector<Tensor> relaxed_masks; // P-hat values per batch element
    Tensor fused_mask_example;         // dense fused mask of element 0
};

/// Feature LayerNorm over the last axis of (B,T,D) tokens.
inline Var feature_layernorm(Graph& g, Var x, Var scale, Var shift, double eps = 1e-5) {
    Var mu = reduce_mean(g, x, {2}, true);
    Var centered = sub(g, x, mu);
    Var var = reduce_mean(g, mul(g, centered, centered), {2}, true);
    Var normed = div_op(g, centered, sqrt_op(g, add_scalar(g, var, eps)));
    return add(g, mul(g, normed, scale), shift);
}

/// Multi-head attention over (B,T,D) with a per-batch additive mask
/// (Bm,T,T) where Bm is 1 or B.
inline Var masked_attention_batched(Graph& g, Var q, Var k, Var v, Var mask_btt, std::size_t heads) {
    const Tensor& tq = g.value(q);
    const std::size_t B = tq.dim(0), T = tq.dim(1), D = tq.dim(2);
    const std::size_t hd = D / heads;
    auto split = [&](Var x) {
        Var r = reshape(g, x, {B, T, heads, hd});
        return reshape(g, permute(g, r, {0, 2, 1, 3}), {B * heads, T, hd});
    };
    Var qs = split(q), ks = split(k), vs = split(v);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    Var scores = reshape(g, mul_scalar(g, bmm(g, qs, ks, false, true), scale), {B, heads, T, T});
    const std::size_t bm = g.value(mask_btt).dim(0);
    Var masked = add(g, scores, reshape(g, mask_btt, {bm, 1, T, T}));
    Var probs = softmax_rows(g, masked);
    Var out = bmm(g, reshape(g, probs, {B * heads, T, T}), vs);
    Var merged = permute(g, reshape(g, out, {B, heads, T, hd}), {0, 2, 1, 3});
    return reshape(g, merged, {B, T, D});
}

/// The DDT forecasting model: heterogeneous gated embedding, patch encoder
/// under the dual causal/dynamic mask, dual experts, quantile heads.
class DdtModel {
public:
    DdtModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        geometry_ = patch_geometry(cfg_.input_len, cfg_.patch);
        RngStream rng(seed);
        const std::size_t d = cfg_.embed_dim;
        energy_ = EnergyEmbedParams::init(cfg_.n_targets, d, rng);
        weather_ = CovariateEmbedParams::init(std::max<std::size_t>(cfg_.n_weather, 1), d, rng);
        timecov_ = CovariateEmbedParams::init(kTimeFeatureCount, d, rng);
        fusion_ = FusionParams::init(d, rng);
        tln_ = TLayerNormParams::init(d);
        bottleneck_ = BottleneckParams::init(cfg_.patch.patch_len * d, cfg_.d_model, rng);
        const std::size_t df = cfg_.n_targets + cfg_.spectral_window / 2 + 1;
        metric_ = MetricState::init(df, rng);
        metric_.tau0 = cfg_.tau0;
        metric_.gamma = cfg_.gamma;
        for (std::size_t i = 0; i < cfg_.resolved_depth(); ++i)
            blocks_.push_back(EncoderBlockParams::init(cfg_.d_model, geometry_.count, rng));
        temporal_ = TemporalExpertParams::init(cfg_.d_model, rng);
        if (use_channel_expert()) {
            channel_ = ChannelExpertParams::init(cfg_.d_model, cfg_.n_targets, rng);
            gate_ = FusionGateParams::init(cfg_.d_model, rng);
        }
        const std::size_t q = cfg_.head.quantiles.size();
        if (cfg_.head.use_direct())
            direct_ = DirectHeadParams::init(geometry_.count, cfg_.d_model, cfg_.head.horizon,
                                             cfg_.n_targets, q, rng);
        else
            recursive_ = RecursiveHeadParams::init(cfg_.d_model, cfg_.n_targets, q, rng);
        build_registry();
    }

    const ModelConfig& config() const { return cfg_; }
    const PatchGeometry& geometry() const { return geometry_; }
    ParamRegistry& params() { return reg_; }
    const ParamRegistry& params() const { return reg_; }
    MetricState& metric() { return metric_; }
    const MetricState& metric() const { return metric_; }
    void set_teacher_forcing(double ratio) { cfg_.head.teacher_forcing_ratio = ratio; }

    std::size_t top_k() const {
        if (cfg_.top_k > 0) return cfg_.top_k;
        return static_cast<std::size_t>(std::ceil(static_cast<double>(geometry_.count) / 4.0));
    }

    bool use_channel_expert() const {
        return cfg_.channel_expert && cfg_.variant != Variant::multivariate_only;
    }

    /// Full forward pass. `noise` seeds the Gumbel draws (split per batch
    /// element) and teacher-forcing coin flips.
    ForwardOut forward(Graph& g, const Batch& batch, RunMode mode, RngStream& noise,
                       bool relaxed_mask = false) const {
        const std::size_t B = batch.targets_in.dim(0);
        const std::size_t L = cfg_.input_len;
        const std::size_t P = geometry_.count;
        if (batch.targets_in.dim(1) != L || batch.targets_in.dim(2) != cfg_.n_targets)
            throw ShapeError("DdtModel::forward: batch targets " + shape_str(batch.targets_in.shape()) +
                             " vs configured L=" + std::to_string(L) +
                             " Nt=" + std::to_string(cfg_.n_targets));
        ParamBinding pb(g, reg_);
        ForwardOut out;
        out.param_leaves = pb.ordered();

        // §III-B embedding and gated fusion
        Var x_e = g.constant(batch.targets_in);
        Var e_e = embed_energy(g, pb, energy_, x_e, ConvPad::causal);
        Var e_w = cfg_.n_weather > 0
                      ? embed_covariate(g, pb, weather_, g.constant(batch.weather_in))
                      : g.constant(Tensor({B, L, cfg_.embed_dim}));
        Var e_t = embed_covariate(g, pb, timecov_, g.constant(batch.time_feats));
        Var fused_embed = gated_fuse(g, pb, fusion_, e_e, e_w, e_t).fused;

        // §III-D patching, normalization, projection, positions
        Var patches = extract_patches(g, fused_embed, cfg_.patch); // B,P,K,D
        Var normed = t_layernorm(g, pb, tln_, patches);
        Var flat = reshape(g, normed, {B, P, cfg_.patch.patch_len * cfg_.embed_dim});
        Var tokens = bottleneck_project(g, pb, bottleneck_, flat);
        tokens = add(g, tokens, g.constant(positional_encode(P, cfg_.d_model)));

        // §III-C mask construction
        Var mask_btt = build_mask(g, pb, batch, mode, noise, relaxed_mask, out);

        // masked attention encoder stack
        Var h = tokens;
        for (const auto& blk : blocks_) {
            Var x1 = feature_layernorm(g, h, pb(blk.ln1_scale), pb(blk.ln1_shift));
            Var q = affine3(g, x1, pb(blk.wq), pb(blk.attn_b));
            Var k = affine3(g, x1, pb(blk.wk), pb(blk.attn_b));
            Var v = affine3(g, x1, pb(blk.wv), pb(blk.attn_b));
            Var bias = stma_bias(g, pb, blk.bias, P);
            Var mask_with_bias = add(g, mask_btt, reshape(g, bias, {1, P, P}));
            Var attn = masked_attention_batched(g, q, k, v, mask_with_bias, cfg_.heads);
            h = add(g, h, affine3(g, attn, pb(blk.wo), pb(blk.attn_b)));
            Var x2 = feature_layernorm(g, h, pb(blk.ln2_scale), pb(blk.ln2_shift));
            Var gate = gelu(g, affine3(g, x2, pb(blk.ffn_gate_w), pb(blk.ffn_gate_b)));
            Var val = affine3(g, x2, pb(blk.ffn_val_w), pb(blk.ffn_val_b));
            Var ffn = affine3(g, mul(g, gate, val), pb(blk.ffn_out_w), pb(blk.ffn_out_b));
            h = add(g, h, ffn);
        }
        out.encoder_out = h;

        // §III-E dual experts with gated fusion and skip
        Var h_t = temporal_expert(g, pb, temporal_, h, ConvPad::same);
        Var expert;
        if (use_channel_expert()) {
            Var h_c = channel_expert(g, pb, *channel_, h).mixed;
            expert = fuse_experts(g, pb, *gate_, h_t, h_c, h).fused;
        } else {
            expert = add(g, h_t, h); // temporal-only pathway keeps the skip
        }
        out.expert_out = expert;

        // §III-B adaptive output heads
        if (cfg_.head.use_direct()) {
            out.prediction = forecast_direct(g, pb, *direct_, expert, cfg_.head);
        } else {
            const Tensor* targets = batch.labels.numel() > 0 ? &batch.labels : nullptr;
            out.prediction = forecast_recursive(g, pb, *recursive_, expert, g.constant(batch.last_value),
                                                cfg_.head, targets,
                                                noise, mode == RunMode::train ? HeadMode::train
                                                                              : HeadMode::eval);
        }
        return out;
    }

private:
    Var build_mask(Graph& g, const ParamBinding& pb, const Batch& batch, RunMode mode, RngStream& noise,
                   bool relaxed_mask, ForwardOut& out) const {
        const std::size_t B = batch.targets_in.dim(0);
        const std::size_t P = geometry_.count;
        const Tensor causal = build_causal_mask(P);
        if (cfg_.variant == Variant::causal_only || cfg_.variant == Variant::multivariate_only) {
            out.fused_mask_example = causal;
            return g.constant(causal.reshaped({1, P, P}));
        }

        Tensor features = patch_spectral_features(batch.targets_in, geometry_.starts, cfg_.patch.patch_len,
                                                  cfg_.spectral_window);
        Var l_factor = metric_factor(g, pb(metric_.l_offdiag), pb(metric_.l_diag_raw));
        MaskSampleConfig mcfg;
        mcfg.k = top_k();
        mcfg.tau = metric_.tau();
        mcfg.mode = mode == RunMode::train ? MaskMode::train : MaskMode::eval;
        mcfg.causal_restrict = cfg_.variant != Variant::dynamic_only;
        mcfg.relaxed_forward = relaxed_mask;

        std::vector<Var> per_batch;
        per_batch.reserve(B);
        for (std::size_t b = 0; b < B; ++b) {
            Tensor fb({P, features.dim(2)});
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t c = 0; c < features.dim(2); ++c) fb.at2(p, c) = features.at3(b, p, c);
            Var dist = mahalanobis_matrix(g, g.constant(fb), l_factor);
            RngStream stream = noise.split(b);
            DynamicMask dm = sample_dynamic_mask(g, dist, pb(metric_.beta_raw), mcfg, stream);
            out.hard_masks.push_back(dm.hard);
            out.relaxed_masks.push_back(g.value(dm.relaxed));
            Var fused = cfg_.variant == Variant::dynamic_only
                            ? log_op(g, add_scalar(g, dm.on_tape, kMaskEps))
                            : fuse_masks(g, causal, dm.on_tape);
            if (b == 0) out.fused_mask_example = g.value(fused);
            per_batch.push_back(reshape(g, fused, {1, P, P}));
        }
        return concat(g, per_batch, 0);
    }

    void build_registry() {
        energy_.register_params(reg_, "embed.energy");
        if (cfg_.n_weather > 0) weather_.register_params(reg_, "embed.weather");
        timecov_.register_params(reg_, "embed.time");
        fusion_.register_params(reg_, "embed.fusion");
        tln_.register_params(reg_, "patch.tln");
        bottleneck_.register_params(reg_, "patch.bottleneck");
        metric_.register_params(reg_, "mask.metric");
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].register_params(reg_, "encoder.block" + std::to_string(i));
        temporal_.register_params(reg_, "expert.temporal");
        if (use_channel_expert()) {
            channel_->register_params(reg_, "expert.channel");
            gate_->register_params(reg_, "expert.gate");
        }
        if (direct_)
            direct_->register_params(reg_, "head.direct");
        else
            recursive_->register_params(reg_, "head.recursive");
    }

    ModelConfig cfg_;
    PatchGeometry geometry_;
    EnergyEmbedParams energy_;
    CovariateEmbedParams weather_, timecov_;
    FusionParams fusion_;
    TLayerNormParams tln_;
    BottleneckParams bottleneck_;
    MetricState metric_;
    std::vector<EncoderBlockParams> blocks_;
    TemporalExpertParams temporal_;
    std::optional<ChannelExpertParams> channel_;
    std::optional<FusionGateParams> gate_;
    std::optional<DirectHeadParams> direct_;
    std::optional<RecursiveHeadParams> recursive_;
    ParamRegistry reg_;
};

// ---------------------------------------------------------------------------
// Conditionally-independent mode (Eq. 18 factorization)
// ---------------------------------------------------------------------------

/// N per-channel model instances with dedicated parameters; channel n sees
/// only its own series plus timestamp-derived features, so cross-channel
/// Jacobians vanish identically. Weather covariates are excluded to keep
/// the factorization exact.
class CiModel {
public:
    CiModel(ModelConfig cfg, std::size_t n_channels, std::uint64_t seed) : n_(n_channels) {
        for (std::size_t n = 0; n < n_; ++n) {
            ModelConfig sub = cfg;
            sub.n_targets = 1;
            sub.n_weather = 0;
            sub.channel_expert = false;
            instances_.push_back(std::make_unique<DdtModel>(sub, seed + n * 7919));
        }
    }

    std::size_t channels() const { return n_; }
    DdtModel& instance(std::size_t n) { return *instances_[n]; }
    const DdtModel& instance(std::size_t n) const { return *instances_[n]; }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const auto& m : instances_) total += m->params().total_size();
        return total;
    }

    /// Per-channel batch slice.
    static Batch slice_channel(const Batch& batch, std::size_t n) {
        Batch sub;
        const std::size_t B = batch.targets_in.dim(0), L = batch.targets_in.dim(1);
        sub.targets_in = Tensor({B, L, 1});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < L; ++t) sub.targets_in.at3(b, t, 0) = batch.targets_in.at3(b, t, n);
        sub.time_feats = batch.time_feats;
        if (batch.labels.numel() > 0) {
            const std::size_t H = batch.labels.dim(1);
            sub.labels = Tensor({B, H, 1});
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t h = 0; h < H; ++h) sub.labels.at3(b, h, 0) = batch.labels.at3(b, h, n);
        }
        sub.last_value = Tensor({B, 1});
        for (std::size_t b = 0; b < B; ++b) sub.last_value.at2(b, 0) = batch.last_value.at2(b, n);
        return sub;
    }

    /// Eval-style forward of every channel; outputs concatenated to
    /// B x H x N x Q.
    Tensor forward_values(const Batch& batch, RunMode mode, RngStream& noise) const {
        std::vector<Tensor> per_channel;
        for (std::size_t n = 0; n < n_; ++n) {
            Graph g;
            RngStream stream = noise.split(n);
            Batch sub = slice_channel(batch, n);
            ForwardOut fo = instances_[n]->forward(g, sub, mode, stream);
            per_channel.push_back(g.value(fo.prediction)); // B,H,1,Q
        }
        const std::size_t B = per_channel[0].dim(0), H = per_channel[0].dim(1),
                          Q = per_channel[0].dim(3);
        Tensor out({B, H, n_, Q});
        for (std::size_t n = 0; n < n_; ++n)
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t q = 0; q < Q; ++q) out.at4(b, h, n, q) = per_channel[n].at4(b, h, 0, q);
        return out;
    }

private:
    std::size_t n_;
    std::vector<std::unique_ptr<DdtModel>> instances_;
};

} // namespace model
} // namespace ddt

#endif
