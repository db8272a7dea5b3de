#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ddt/gradcheck.hpp"
#include "ddt/model/experts.hpp"
#include "ddt/rng.hpp"

using namespace ddt;
using namespace ddt::model;

namespace {

Tensor run_temporal(const TemporalExpertParams& p, const Tensor& z, ConvPad pad = ConvPad::same) {
    Graph g;
    ParamRegistry reg;
    TemporalExpertParams cp = p;
    cp.register_params(reg, "t");
    ParamBinding pb(g, reg);
    return g.value(temporal_expert(g, pb, cp, g.constant(z), pad));
}

struct ChannelRun {
    Tensor mixed, adjacency;
};

ChannelRun run_channel(const ChannelExpertParams& p, const Tensor& z) {
    Graph g;
    ParamRegistry reg;
    ChannelExpertParams cp = p;
    cp.register_params(reg, "c");
    ParamBinding pb(g, reg);
    ChannelExpertOut out = channel_expert(g, pb, cp, g.constant(z));
    return {g.value(out.mixed), g.value(out.adjacency)};
}

} // namespace

TEST_CASE("temporal expert: zero propagation and the half-gate identity") {
    RngStream rng(3);
    const std::size_t D = 4;
    TemporalExpertParams p = TemporalExpertParams::init(D, rng);
    {
        Tensor out = run_temporal(p, Tensor({2, 6, D}));
        REQUIRE(out.max_abs() == 0.0); // zero input, zero biases
    }
    {
        // k=1 branch with identity value conv and zero gate conv: 0.5 * Z
        TemporalExpertParams ip = p;
        for (std::size_t i = 0; i < 3; ++i) {
            ip.dconv_w[i] = Tensor(ip.dconv_w[i].shape());
            ip.gconv_w[i] = Tensor(ip.gconv_w[i].shape());
        }
        for (std::size_t d = 0; d < D; ++d) ip.dconv_w[0].at3(0, d, d) = 1.0;
        ip.mixer_w = Tensor::identity(D);
        ip.mixer_b = Tensor({D});
        RngStream rx(5);
        Tensor z = rx.normal_tensor({1, 5, D});
        Tensor out = run_temporal(ip, z);
        for (std::size_t i = 0; i < z.numel(); ++i)
            REQUIRE(out[i] == Catch::Approx(0.5 * z[i]).margin(1e-12));
    }
}

TEST_CASE("temporal expert is translation-equivariant on interior tokens") {
    RngStream rng(7);
    const std::size_t D = 3, P = 40;
    TemporalExpertParams p = TemporalExpertParams::init(D, rng);
    Tensor z = rng.normal_tensor({1, P, D});
    Tensor zs({1, P, D});
    for (std::size_t t = 1; t < P; ++t)
        for (std::size_t d = 0; d < D; ++d) zs.at3(0, t, d) = z.at3(0, t - 1, d);
    Tensor out = run_temporal(p, z);
    Tensor outs = run_temporal(p, zs);
    const std::size_t boundary = (5 - 1) * 5 / 2; // largest kernel and dilation
    for (std::size_t t = boundary + 1; t + boundary < P; ++t)
        for (std::size_t d = 0; d < D; ++d)
            REQUIRE(outs.at3(0, t, d) == Catch::Approx(out.at3(0, t - 1, d)).margin(1e-12));
}

TEST_CASE("temporal expert gradients") {
    RngStream rng(11);
    const std::size_t D = 2;
    TemporalExpertParams p = TemporalExpertParams::init(D, rng);
    Tensor z = rng.normal_tensor({1, 7, D});
    auto build = [&z](Graph& g, const std::vector<Var>& v) {
        Var acc = -1;
        for (std::size_t i = 0; i < 3; ++i) {
            const std::size_t k = kTemporalKernels[i];
            Var val = conv1d(g, g.constant(z), v[2 * i], g.constant(Tensor({D})), k, ConvPad::same);
            Var gate = sigmoid(g, conv1d(g, g.constant(z), v[2 * i + 1], g.constant(Tensor({D})), k,
                                         ConvPad::same));
            Var branch = mul(g, val, gate);
            acc = i == 0 ? branch : add(g, acc, branch);
        }
        Var out = affine3(g, acc, v[6], v[7]);
        return sum_all(g, mul(g, out, out));
    };
    auto res = grad_check(build, {p.dconv_w[0], p.gconv_w[0], p.dconv_w[1], p.gconv_w[1], p.dconv_w[2],
                                  p.gconv_w[2], p.mixer_w, p.mixer_b});
    REQUIRE(res.max_rel_err < 1e-4);
}

TEST_CASE("channel expert: degenerate single channel and uniform scorer") {
    RngStream rng(13);
    {
        const std::size_t D = 4;
        ChannelExpertParams p = ChannelExpertParams::init(D, 1, rng);
        Tensor z = rng.normal_tensor({2, 3, D});
        ChannelRun r = run_channel(p, z);
        for (std::size_t i = 0; i < r.adjacency.numel(); ++i) REQUIRE(r.adjacency[i] == 1.0);
        // h_c reduces to the per-slice value mixer applied to Z itself
        Graph g;
        Var mixed = affine(g, g.constant(z.reshaped({6, 4})), g.constant(p.mixer_w), g.constant(p.mixer_b));
        for (std::size_t i = 0; i < r.mixed.numel(); ++i)
            REQUIRE(r.mixed[i] == Catch::Approx(g.value(mixed)[i]).margin(1e-12));
    }
    {
        const std::size_t D = 8, N = 4;
        ChannelExpertParams p = ChannelExpertParams::init(D, N, rng);
        p.scorer_w1 = Tensor(p.scorer_w1.shape());
        p.scorer_w2 = Tensor(p.scorer_w2.shape());
        Tensor z = rng.normal_tensor({1, 2, D});
        ChannelRun r = run_channel(p, z);
        for (std::size_t i = 0; i < r.adjacency.numel(); ++i)
            REQUIRE(r.adjacency[i] == Catch::Approx(1.0 / N).margin(1e-12));
    }
}

TEST_CASE("channel expert matches a per-pair loop oracle") {
    RngStream rng(17);
    const std::size_t B = 2, P = 3, D = 6, N = 3, Dc = D / N;
    ChannelExpertParams p = ChannelExpertParams::init(D, N, rng);
    Tensor z = rng.normal_tensor({B, P, D});
    ChannelRun r = run_channel(p, z);

    const std::size_t hidden = p.scorer_b1.numel();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < P; ++t) {
            // adjacency scores by explicit loops
            std::vector<std::vector<double>> a(N, std::vector<double>(N));
            for (std::size_t i = 0; i < N; ++i) {
                double mx = -1e300;
                for (std::size_t j = 0; j < N; ++j) {
                    std::vector<double> in(2 * Dc + 1, 0.0);
                    for (std::size_t c = 0; c < Dc; ++c) {
                        in[c] = z.at3(b, t, i * Dc + c);
                        in[Dc + c] = z.at3(b, t, j * Dc + c);
                    }
                    double score = p.scorer_b2[0];
                    for (std::size_t h = 0; h < hidden; ++h) {
                        double pre = p.scorer_b1[h];
                        for (std::size_t c = 0; c < 2 * Dc + 1; ++c) pre += in[c] * p.scorer_w1.at2(c, h);
                        const double act = pre * 0.5 * std::erfc(-pre / std::sqrt(2.0));
                        score += act * p.scorer_w2.at2(h, 0);
                    }
                    a[i][j] = score;
                    mx = std::max(mx, score);
                }
                double zsum = 0;
                for (std::size_t j = 0; j < N; ++j) {
                    a[i][j] = std::exp(a[i][j] - mx);
                    zsum += a[i][j];
                }
                for (std::size_t j = 0; j < N; ++j) a[i][j] /= zsum;
            }
            double rowsum_check = 0;
            for (std::size_t i = 0; i < N; ++i) {
                rowsum_check = 0;
                for (std::size_t j = 0; j < N; ++j) {
                    REQUIRE(r.adjacency.at4(b, t, i, j) == Catch::Approx(a[i][j]).margin(1e-10));
                    rowsum_check += r.adjacency.at4(b, t, i, j);
                }
                REQUIRE(rowsum_check == Catch::Approx(1.0).margin(1e-9));
            }
            // mixed slices: value-mixer( sum_j A_ij z_j )
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < Dc; ++c) {
                    double want = p.mixer_b[c];
                    for (std::size_t cc = 0; cc < Dc; ++cc) {
                        double mixed_cc = 0;
                        for (std::size_t j = 0; j < N; ++j)
                            mixed_cc += a[i][j] * z.at3(b, t, j * Dc + cc);
                        want += mixed_cc * p.mixer_w.at2(cc, c);
                    }
                    REQUIRE(r.mixed.at3(b, t, i * Dc + c) == Catch::Approx(want).margin(1e-10));
                }
        }
}

TEST_CASE("channel expert is permutation-equivariant") {
    RngStream rng(19);
    const std::size_t B = 1, P = 2, D = 6, N = 3, Dc = 2;
    ChannelExpertParams p = ChannelExpertParams::init(D, N, rng);
    Tensor z = rng.normal_tensor({B, P, D});
    const std::size_t perm[N] = {2, 0, 1};
    Tensor zp({B, P, D});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < P; ++t)
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < Dc; ++c)
                    zp.at3(b, t, i * Dc + c) = z.at3(b, t, perm[i] * Dc + c);
    ChannelRun r = run_channel(p, z);
    ChannelRun rp = run_channel(p, zp);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < P; ++t)
            for (std::size_t i = 0; i < N; ++i)
                for (std::size_t c = 0; c < Dc; ++c)
                    REQUIRE(rp.mixed.at3(b, t, i * Dc + c) ==
                            Catch::Approx(r.mixed.at3(b, t, perm[i] * Dc + c)).margin(1e-12));
}

TEST_CASE("expert fusion: saturation, degeneracy, convex combination plus skip") {
    RngStream rng(23);
    const std::size_t B = 2, P = 4, D = 6;
    FusionGateParams p = FusionGateParams::init(D, rng);
    Tensor h_t = rng.normal_tensor({B, P, D});
    Tensor h_c = rng.normal_tensor({B, P, D});
    Tensor z = rng.normal_tensor({B, P, D});

    auto run = [&](const FusionGateParams& fp, const Tensor& ht, const Tensor& hc) {
        Graph g;
        ParamRegistry reg;
        FusionGateParams cp = fp;
        cp.register_params(reg, "f");
        ParamBinding pb(g, reg);
        ExpertFusionOut out = fuse_experts(g, pb, cp, g.constant(ht), g.constant(hc), g.constant(z));
        return std::pair<Tensor, Tensor>(g.value(out.fused), g.value(out.gate));
    };

    {
        FusionGateParams sp = p;
        sp.w2 = Tensor(sp.w2.shape());
        sp.b2 = Tensor::full({D}, 30.0); // gate -> 1
        auto [fused, gate] = run(sp, h_t, h_c);
        for (std::size_t i = 0; i < B * P * D; ++i)
            REQUIRE(fused[i] == Catch::Approx(h_t[i] + z[i]).margin(1e-9));
        sp.b2 = Tensor::full({D}, -30.0); // gate -> 0
        auto [fused0, gate0] = run(sp, h_t, h_c);
        for (std::size_t i = 0; i < B * P * D; ++i)
            REQUIRE(fused0[i] == Catch::Approx(h_c[i] + z[i]).margin(1e-9));
    }
    {
        // equal expert outputs make the gate irrelevant
        auto [fused, gate] = run(p, h_t, h_t);
        for (std::size_t i = 0; i < B * P * D; ++i)
            REQUIRE(fused[i] == Catch::Approx(h_t[i] + z[i]).margin(1e-12));
    }
    {
        // h_out - Z is the exact convex combination with the recomputed gate
        auto [fused, gate] = run(p, h_t, h_c);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < P; ++t)
                for (std::size_t d = 0; d < D; ++d) {
                    const double gv = gate.at3(b, 0, d);
                    REQUIRE(gv > 0.0);
                    REQUIRE(gv < 1.0);
                    const double want = gv * h_t.at3(b, t, d) + (1 - gv) * h_c.at3(b, t, d) + z.at3(b, t, d);
                    REQUIRE(fused.at3(b, t, d) == Catch::Approx(want).margin(1e-12));
                }
    }
}
