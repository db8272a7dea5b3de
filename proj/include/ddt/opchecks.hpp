#ifndef DDT_OPCHECKS_HPP
#define DDT_OPCHECKS_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ddt/gradcheck.hpp"
#include "ddt/model/embedding.hpp"
#include "ddt/model/experts.hpp"
#include "ddt/model/forecaster.hpp"
#include "ddt/model/masking.hpp"
#include "ddt/model/patching.hpp"
#include "ddt/ops.hpp"
#include "ddt/rng.hpp"

namespace ddt {

/// One registered differentiable-op check: a point generator plus the loss
/// builder evaluated on it.
struct OpCheck {
    std::string name;
    double tolerance = 1e-4;
    std::function<std::pair<LossBuilder, std::vector<Tensor>>(RngStream&)> make;
};

struct OpCheckReport {
    std::string name;
    double max_rel_err = 0;
    double tolerance = 0;
    bool pass = false;
};

namespace opchecks_detail {

inline Tensor rnd(RngStream& rng, Shape s) { return rng.uniform_tensor(std::move(s), -1.5, 1.5); }
inline Tensor rnd_pos(RngStream& rng, Shape s) { return rng.uniform_tensor(std::move(s), 0.3, 2.0); }

} // namespace opchecks_detail

/// The registry covers every primitive with a hand-written backward plus the
/// model-level compositions named by the architecture.
inline std::vector<OpCheck> op_check_registry() {
    using namespace opchecks_detail;
    std::vector<OpCheck> ops;

    ops.push_back({"add_sub_broadcast", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            return sum_all(g, mul(g, add(g, v[0], v[1]), sub(g, v[0], v[2])));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {2, 3, 4}), rnd(r, {3, 1}), rnd(r, {4})});
    }});
    ops.push_back({"mul_div", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            return mean_all(g, div_op(g, mul(g, v[0], v[1]), v[2]));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {3, 4}), rnd(r, {4}), rnd_pos(r, {3, 4})});
    }});
    ops.push_back({"maximum", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            return sum_all(g, maximum(g, v[0], v[1]));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {5, 3}), rnd(r, {5, 3})});
    }});
    ops.push_back({"scalar_ops", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            return sum_all(g, add_scalar(g, mul_scalar(g, v[0], 1.7), -0.3));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {6})});
    }});
    ops.push_back({"exp_log_sqrt", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            return sum_all(g, log_op(g, sqrt_op(g, exp_op(g, v[0]))));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {4, 2})});
    }});
    ops.push_back({"tanh_sigmoid_softplus_gelu_relu", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Var h = gelu(g, tanh_op(g, v[0]));
            h = softplus(g, sigmoid(g, h));
            return sum_all(g, mul(g, h, relu(g, v[0])));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {3, 5})});
    }});
    for (int ta = 0; ta < 2; ++ta)
        for (int tb = 0; tb < 2; ++tb) {
            std::string nm = std::string("matmul_") + (ta ? "t" : "n") + (tb ? "t" : "n");
            ops.push_back({nm, 1e-4, [ta, tb](RngStream& r) {
                LossBuilder b = [ta, tb](Graph& g, const std::vector<Var>& v) {
                    return sum_all(g, mul(g, matmul(g, v[0], v[1], ta, tb), v[2]));
                };
                Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
                Shape sb = tb ? Shape{2, 4} : Shape{4, 2};
                return std::make_pair(b, std::vector<Tensor>{rnd(r, sa), rnd(r, sb), rnd(r, {3, 2})});
            }});
        }
    ops.push_back({"bmm", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            return sum_all(g, mul(g, bmm(g, v[0], v[1], false, true), v[2]));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {2, 3, 4}), rnd(r, {2, 3, 4}), rnd(r, {2, 3, 3})});
    }});
    ops.push_back({"reshape_permute", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Var p = permute(g, reshape(g, v[0], {2, 3, 4}), {2, 0, 1});
            return sum_all(g, mul(g, p, p));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {24})});
    }});
    ops.push_back({"slice_concat", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Var s1 = slice(g, v[0], 1, 0, 2);
            Var s2 = slice(g, v[0], 1, 2, 2);
            Var c = concat(g, {s2, s1, v[1]}, 1);
            return sum_all(g, mul(g, c, c));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {3, 4}), rnd(r, {3, 2})});
    }});
    ops.push_back({"reduce_sum_mean", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Var s = reduce_sum(g, v[0], {1}, true);
            Var m = reduce_mean(g, v[0], {0, 2}, false);
            return add(g, sum_all(g, mul(g, s, s)), sum_all(g, mul(g, m, m)));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {2, 3, 4})});
    }});
    ops.push_back({"softmax_masked", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Tensor mask({4, 5});
            mask.at2(0, 4) = kNegInf;
            mask.at2(2, 0) = kNegInf;
            Var p = softmax_rows(g, add(g, v[0], g.constant(mask)));
            return sum_all(g, mul(g, p, v[1]));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {4, 5}), rnd(r, {4, 5})});
    }});
    for (auto pad : {ConvPad::same, ConvPad::causal})
        ops.push_back({pad == ConvPad::same ? "conv1d_same_dilated" : "conv1d_causal_dilated", 1e-4,
                       [pad](RngStream& r) {
            LossBuilder b = [pad](Graph& g, const std::vector<Var>& v) {
                Var y = conv1d(g, v[0], v[1], v[2], 2, pad);
                return sum_all(g, mul(g, y, y));
            };
            return std::make_pair(b, std::vector<Tensor>{rnd(r, {2, 7, 2}), rnd(r, {3, 2, 3}), rnd(r, {3})});
        }});
    ops.push_back({"straight_through_wiring", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Var st = straight_through(g, v[0], g.value(v[0]));
            return sum_all(g, mul(g, st, v[1]));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {3, 3}), rnd(r, {3, 3})});
    }});
    ops.push_back({"diag_embed_gather_index", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Var d = diag_embed(g, v[0]);
            Var ge = gather_index(g, v[1], {0, 1, 1, 2, 0, 2}, {6});
            return add(g, sum_all(g, mul(g, d, d)), sum_all(g, mul(g, ge, ge)));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {4}), rnd(r, {3})});
    }});

    // model-level compositions
    ops.push_back({"mahalanobis_metric", 1e-4, [](RngStream& r) {
        Tensor f = r.normal_tensor({6, 4});
        LossBuilder b = [f](Graph& g, const std::vector<Var>& v) {
            Var l = model::metric_factor(g, v[0], v[1]);
            Var d = model::mahalanobis_matrix(g, g.constant(f), l);
            return sum_all(g, mul(g, d, d));
        };
        return std::make_pair(b, std::vector<Tensor>{r.normal_tensor({4, 4}, 0.4), rnd(r, {4})});
    }});
    ops.push_back({"fused_masked_attention_qkv", 1e-4, [](RngStream& r) {
        const std::size_t T = 7;
        Tensor dyn({T, T});
        for (std::size_t i = 0; i < T; ++i)
            for (std::size_t j = 0; j < T; ++j)
                dyn.at2(i, j) = (i == j || (i >= 1 && j == i - 1) || r.uniform() < 0.5) ? 1.0 : 0.0;
        Tensor fused = model::fuse_masks(model::build_causal_mask(T), dyn);
        LossBuilder b = [fused](Graph& g, const std::vector<Var>& v) {
            Var o = model::masked_attention(g, v[0], v[1], v[2], g.constant(fused));
            return sum_all(g, mul(g, o, o));
        };
        return std::make_pair(b, std::vector<Tensor>{r.normal_tensor({T, 3}), r.normal_tensor({T, 3}),
                                                     r.normal_tensor({T, 3})});
    }});
    ops.push_back({"mask_metric_straight_through_relaxed", 1e-3, [](RngStream& r) {
        const std::size_t T = 6, df = 4, dk = 3;
        Tensor f = r.normal_tensor({T, df});
        Tensor q = r.normal_tensor({T, dk}), k = r.normal_tensor({T, dk}), v3 = r.normal_tensor({T, dk});
        Tensor causal = model::build_causal_mask(T);
        LossBuilder b = [f, q, k, v3, causal](Graph& g, const std::vector<Var>& v) {
            Var l = model::metric_factor(g, v[0], v[1]);
            Var d = model::mahalanobis_matrix(g, g.constant(f), l);
            model::MaskSampleConfig cfg;
            cfg.k = 3;
            cfg.tau = 0.9;
            cfg.mode = model::MaskMode::eval;
            cfg.relaxed_forward = true; // the straight-through surrogate
            RngStream noise(17);
            model::DynamicMask dm = model::sample_dynamic_mask(g, d, v[2], cfg, noise);
            Var fm = model::fuse_masks(g, causal, dm.on_tape);
            Var o = model::masked_attention(g, g.constant(q), g.constant(k), g.constant(v3), fm);
            return sum_all(g, mul(g, o, o));
        };
        return std::make_pair(b, std::vector<Tensor>{r.normal_tensor({df, df}, 0.3), rnd(r, {df}),
                                                     Tensor({1}, {0.5})});
    }});
    ops.push_back({"gated_fusion", 1e-4, [](RngStream& r) {
        const std::size_t B = 1, L = 4, D = 3;
        Tensor e_e = r.normal_tensor({B, L, D}), e_w = r.normal_tensor({B, L, D}),
               e_t = r.normal_tensor({B, L, D});
        LossBuilder b = [e_e, e_w, e_t](Graph& g, const std::vector<Var>& v) {
            Var cat = concat(g, {g.constant(e_e), g.constant(e_w), g.constant(e_t)}, 2);
            Var gate = sigmoid(g, affine3(g, cat, v[0], v[1]));
            Var blend = affine3(g, gelu(g, affine3(g, cat, v[2], v[3])), v[4], v[5]);
            Var one_minus = add_scalar(g, mul_scalar(g, gate, -1.0), 1.0);
            Var out = add(g, mul(g, gate, g.constant(e_e)), mul(g, one_minus, blend));
            return sum_all(g, mul(g, out, out));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {9, 3}), rnd(r, {3}), rnd(r, {9, 3}),
                                                     rnd(r, {3}), rnd(r, {3, 3}), rnd(r, {3})});
    }});
    ops.push_back({"t_layernorm", 1e-4, [](RngStream& r) {
        LossBuilder b = [](Graph& g, const std::vector<Var>& v) {
            Var mu = reduce_mean(g, v[0], {2, 3}, true);
            Var centered = sub(g, v[0], mu);
            Var var = reduce_mean(g, mul(g, centered, centered), {2, 3}, true);
            Var normed = div_op(g, centered, sqrt_op(g, add_scalar(g, var, 1e-5)));
            Var out = add(g, mul(g, normed, v[1]), v[2]);
            return sum_all(g, mul(g, out, out));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {1, 2, 4, 3}), rnd_pos(r, {3}), rnd(r, {3})});
    }});
    ops.push_back({"bottleneck_projection", 1e-4, [](RngStream& r) {
        Tensor x = r.normal_tensor({1, 3, 6});
        LossBuilder b = [x](Graph& g, const std::vector<Var>& v) {
            Var h = affine3(g, gelu(g, affine3(g, g.constant(x), v[0], v[1])), v[2], v[3]);
            return sum_all(g, mul(g, h, h));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {6, 8}), rnd(r, {8}), rnd(r, {8, 4}),
                                                     rnd(r, {4})});
    }});
    ops.push_back({"stma_bias", 1e-4, [](RngStream& r) {
        const std::size_t P = 9;
        LossBuilder b = [P](Graph& g, const std::vector<Var>& v) {
            std::vector<std::size_t> index(P * P);
            for (std::size_t i = 0; i < P; ++i)
                for (std::size_t j = 0; j < P; ++j)
                    index[i * P + j] = model::stma_bucket(i >= j ? i - j : j - i);
            Var rmat = gather_index(g, v[0], index, {P, P});
            return sum_all(g, mul(g, rmat, rmat));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {model::stma_bucket_count(P)})});
    }});
    ops.push_back({"temporal_expert", 1e-4, [](RngStream& r) {
        Tensor z = r.normal_tensor({1, 6, 2});
        LossBuilder b = [z](Graph& g, const std::vector<Var>& v) {
            Var acc = -1;
            for (std::size_t i = 0; i < 3; ++i) {
                const std::size_t k = model::kTemporalKernels[i];
                Var val = conv1d(g, g.constant(z), v[2 * i], g.constant(Tensor({2})), k, ConvPad::same);
                Var gate = sigmoid(g, conv1d(g, g.constant(z), v[2 * i + 1], g.constant(Tensor({2})), k,
                                             ConvPad::same));
                Var branch = mul(g, val, gate);
                acc = i == 0 ? branch : add(g, acc, branch);
            }
            return sum_all(g, mul(g, acc, acc));
        };
        std::vector<Tensor> pt;
        for (std::size_t i = 0; i < 3; ++i) {
            const std::size_t k = model::kTemporalKernels[i];
            pt.push_back(rnd(r, {k, 2, 2}));
            pt.push_back(rnd(r, {k, 2, 2}));
        }
        return std::make_pair(b, pt);
    }});
    ops.push_back({"channel_expert", 1e-4, [](RngStream& r) {
        const std::size_t B = 1, P = 2, D = 4, N = 2, Dc = 2;
        Tensor z = r.normal_tensor({B, P, D});
        LossBuilder b = [z, B, P, D, N, Dc](Graph& g, const std::vector<Var>& v) {
            Var zc = g.constant(z);
            std::vector<Var> slices;
            for (std::size_t i = 0; i < N; ++i) slices.push_back(slice(g, zc, 2, i * Dc, Dc));
            Var dt = g.constant(Tensor({B, P, 1}));
            std::vector<Var> feats;
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t j = 0; j < N; ++j)
                    feats.push_back(reshape(g, concat(g, {slices[i], slices[j], dt}, 2), {B, P, 1, 2 * Dc + 1}));
            Var flat = reshape(g, concat(g, feats, 2), {B * P * N * N, 2 * Dc + 1});
            Var hidden = gelu(g, affine(g, flat, v[0], v[1]));
            Var scores = affine(g, hidden, v[2], v[3]);
            Var a = softmax_rows(g, reshape(g, scores, {B, P, N, N}));
            Var mixed = bmm(g, reshape(g, a, {B * P, N, N}), reshape(g, zc, {B * P, N, Dc}));
            Var out = affine(g, reshape(g, mixed, {B * P * N, Dc}), v[4], v[5]);
            return sum_all(g, mul(g, out, out));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {5, 4}), rnd(r, {4}), rnd(r, {4, 1}),
                                                     rnd(r, {1}), rnd(r, {2, 2}), rnd(r, {2})});
    }});
    ops.push_back({"expert_fusion_gate", 1e-4, [](RngStream& r) {
        const std::size_t B = 2, P = 3, D = 4;
        Tensor ht = r.normal_tensor({B, P, D}), hc = r.normal_tensor({B, P, D}),
               z = r.normal_tensor({B, P, D});
        LossBuilder b = [ht, hc, z, B, D](Graph& g, const std::vector<Var>& v) {
            Var zbar = reshape(g, reduce_mean(g, g.constant(z), {1}, false), {B, D});
            Var gate2 = sigmoid(g, affine(g, gelu(g, affine(g, zbar, v[0], v[1])), v[2], v[3]));
            Var gate = reshape(g, gate2, {B, 1, D});
            Var om = add_scalar(g, mul_scalar(g, gate, -1.0), 1.0);
            Var out = add(g, add(g, mul(g, gate, g.constant(ht)), mul(g, om, g.constant(hc))),
                          g.constant(z));
            return sum_all(g, mul(g, out, out));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {4, 4}), rnd(r, {4}), rnd(r, {4, 4}),
                                                     rnd(r, {4})});
    }});
    ops.push_back({"quantile_loss_offkink", 1e-6, [](RngStream& r) {
        Tensor y = r.uniform_tensor({1, 3, 2}, -1.5, -0.5);
        LossBuilder b = [y](Graph& g, const std::vector<Var>& v) {
            return model::quantile_loss(g, v[0], g.constant(y), {0.1, 0.5, 0.9});
        };
        return std::make_pair(b, std::vector<Tensor>{r.uniform_tensor({1, 3, 2, 3}, 0.5, 1.5)});
    }});
    ops.push_back({"lstm_cell", 1e-4, [](RngStream& r) {
        const std::size_t B = 2, D = 3, N = 2;
        Tensor enc = r.normal_tensor({B, 4, D});
        Tensor prev = r.normal_tensor({B, N});
        LossBuilder b = [enc, prev, B, D, N](Graph& g, const std::vector<Var>& v) {
            Var h = reshape(g, reduce_mean(g, g.constant(enc), {1}, false), {B, D});
            Var c = g.constant(Tensor({B, D}));
            Var x = affine(g, g.constant(prev), v[0], v[1]);
            Var gates = add(g, add(g, matmul(g, x, v[2]), matmul(g, h, v[3])), v[4]);
            Var gi = sigmoid(g, slice(g, gates, 1, 0, D));
            Var gf = sigmoid(g, slice(g, gates, 1, D, D));
            Var go = sigmoid(g, slice(g, gates, 1, 2 * D, D));
            Var gc = tanh_op(g, slice(g, gates, 1, 3 * D, D));
            Var cc = add(g, mul(g, gf, c), mul(g, gi, gc));
            Var hh = mul(g, go, tanh_op(g, cc));
            return sum_all(g, mul(g, hh, hh));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {N, D}), rnd(r, {D}), rnd(r, {D, 4 * D}),
                                                     rnd(r, {D, 4 * D}), rnd(r, {4 * D})});
    }});
    ops.push_back({"direct_head", 1e-4, [](RngStream& r) {
        Tensor enc = r.normal_tensor({2, 3, 4});
        LossBuilder b = [enc](Graph& g, const std::vector<Var>& v) {
            Var flat = reshape(g, g.constant(enc), {2, 12});
            Var out = affine(g, flat, v[0], v[1]);
            return sum_all(g, mul(g, out, out));
        };
        return std::make_pair(b, std::vector<Tensor>{rnd(r, {12, 6}), rnd(r, {6})});
    }});
    return ops;
}

inline std::uint64_t fnv_name(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Run checks at `points` random points each; report the worst error per op.
inline std::vector<OpCheckReport> run_op_checks(const std::vector<OpCheck>& ops, std::size_t points,
                                                std::uint64_t seed) {
    std::vector<OpCheckReport> out;
    for (const auto& op : ops) {
        RngStream rng(seed ^ fnv_name(op.name));
        OpCheckReport rep;
        rep.name = op.name;
        rep.tolerance = op.tolerance;
        for (std::size_t p = 0; p < points; ++p) {
            auto [builder, point] = op.make(rng);
            GradCheckResult res = grad_check(builder, std::move(point));
            rep.max_rel_err = std::max(rep.max_rel_err, res.max_rel_err);
        }
        rep.pass = rep.max_rel_err < rep.tolerance;
        out.push_back(rep);
    }
    return out;
}

} // namespace ddt

#endif
