#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ddt/gradcheck.hpp"
#include "ddt/model/patching.hpp"
#include "ddt/rng.hpp"

using namespace ddt;
using namespace ddt::model;

TEST_CASE("patch extraction geometry and padding") {
    {
        PatchConfig cfg{4, 2};
        PatchGeometry geo = patch_geometry(8, cfg);
        REQUIRE(geo.count == 3);
        REQUIRE(geo.pad_tail == 0);
        Tensor x({1, 8, 1}, {0, 1, 2, 3, 4, 5, 6, 7});
        Tensor p = extract_patches(x, cfg);
        REQUIRE(p.shape() == Shape{1, 3, 4, 1});
        // patch 1 covers source indices 2..5
        for (std::size_t j = 0; j < 4; ++j) REQUIRE(p.at4(0, 1, j, 0) == double(2 + j));
    }
    {
        // non-overlapping, divisible: bitwise reconstruction
        PatchConfig cfg{4, 4};
        RngStream rng(5);
        Tensor x = rng.normal_tensor({2, 8, 3});
        Tensor p = extract_patches(x, cfg);
        REQUIRE(p.dim(1) == 2);
        Tensor back = unpatch_average(p, 8, cfg);
        REQUIRE(back.vec() == x.vec());
    }
    {
        // L=10, K=4, S=4: padded to 12, last patch has two zero columns
        PatchConfig cfg{4, 4};
        PatchGeometry geo = patch_geometry(10, cfg);
        REQUIRE(geo.padded_len == 12);
        REQUIRE(geo.count == 3);
        Tensor x = Tensor::full({1, 10, 2}, 1.5);
        Tensor p = extract_patches(x, cfg);
        for (std::size_t j = 2; j < 4; ++j)
            for (std::size_t n = 0; n < 2; ++n) REQUIRE(p.at4(0, 2, j, n) == 0.0);
        for (std::size_t j = 0; j < 2; ++j) REQUIRE(p.at4(0, 2, j, 0) == 1.5);
    }
    {
        PatchConfig cfg{16, 8};
        REQUIRE_THROWS_AS(patch_geometry(8, cfg), std::invalid_argument);
        REQUIRE_THROWS_AS(patch_geometry(32, PatchConfig{8, 9}), std::invalid_argument);
    }
    {
        // overlap-averaged reconstruction is exact on the unpadded region
        RngStream rng(9);
        for (auto [K, S] : {std::pair<std::size_t, std::size_t>{8, 3}, {6, 2}, {5, 5}, {7, 1}}) {
            Tensor x = rng.normal_tensor({2, 23, 2});
            PatchConfig cfg{K, S};
            Tensor back = unpatch_average(extract_patches(x, cfg), 23, cfg);
            for (std::size_t i = 0; i < x.numel(); ++i)
                REQUIRE(back[i] == Catch::Approx(x[i]).margin(1e-12));
        }
    }
    {
        // gradient flows through extraction
        RngStream rng(13);
        Tensor x = rng.normal_tensor({1, 10, 2});
        auto build = [](Graph& g, const std::vector<Var>& v) {
            Var p = extract_patches(g, v[0], PatchConfig{4, 2});
            return sum_all(g, mul(g, p, p));
        };
        REQUIRE(grad_check(build, {x}).max_rel_err < 1e-4);
    }
}

TEST_CASE("temporal-aware layer normalization") {
    {
        // constant patch: zeros before scale/shift
        Tensor p = Tensor::full({1, 1, 3, 2}, 4.2);
        Tensor out = t_layernorm_moments(p);
        for (std::size_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == Catch::Approx(0.0).margin(1e-12));
    }
    {
        // already zero-mean unit-variance patch normalizes to +-1
        Tensor p({1, 1, 2, 2}, {1, -1, 1, -1});
        Tensor out = t_layernorm_moments(p);
        for (std::size_t i = 0; i < 4; ++i)
            REQUIRE(std::abs(out[i]) == Catch::Approx(1.0).margin(1e-4));
    }
    {
        // post-normalization moments per patch; eps keeps |var-1| at
        // eps/(sigma^2+eps), so use patches with healthy spread
        RngStream rng(3);
        Tensor p = rng.normal_tensor({2, 3, 8, 4}, 8.0);
        Tensor out = t_layernorm_moments(p);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t q = 0; q < 3; ++q) {
                double m = 0, v = 0;
                for (std::size_t k = 0; k < 8; ++k)
                    for (std::size_t n = 0; n < 4; ++n) m += out.at4(b, q, k, n);
                m /= 32.0;
                for (std::size_t k = 0; k < 8; ++k)
                    for (std::size_t n = 0; n < 4; ++n) {
                        const double d = out.at4(b, q, k, n) - m;
                        v += d * d;
                    }
                v /= 32.0;
                REQUIRE(std::abs(m) < 1e-9);
                REQUIRE(std::abs(v - 1.0) < 1e-6);
            }
    }
    {
        // learned affine and gradients
        RngStream rng(5);
        Tensor p = rng.normal_tensor({1, 2, 3, 2});
        TLayerNormParams lp = TLayerNormParams::init(2);
        auto build = [&p](Graph& g, const std::vector<Var>& v) {
            Var mu = reduce_mean(g, v[0], {2, 3}, true);
            Var centered = sub(g, v[0], mu);
            Var var = reduce_mean(g, mul(g, centered, centered), {2, 3}, true);
            Var normed = div_op(g, centered, sqrt_op(g, add_scalar(g, var, 1e-5)));
            Var out = add(g, mul(g, normed, v[1]), v[2]);
            return sum_all(g, mul(g, out, out));
        };
        REQUIRE(grad_check(build, {p, lp.scale, lp.shift}).max_rel_err < 1e-4);
    }
}

TEST_CASE("dynamic positional encoding") {
    {
        Tensor pe = positional_encode(16, 8);
        for (std::size_t i = 0; i < 4; ++i) {
            REQUIRE(pe.at2(0, 2 * i) == 0.0);
            REQUIRE(pe.at2(0, 2 * i + 1) == 1.0);
        }
    }
    {
        // length-adaptive: same position, different patch counts differ
        Tensor a = positional_encode(16, 8);
        Tensor b = positional_encode(64, 8);
        bool differs = false;
        for (std::size_t d = 0; d < 8; ++d)
            if (a.at2(3, d) != b.at2(3, d)) differs = true;
        REQUIRE(differs);
    }
    {
        // exhaustive pairwise distinctness up to P = 512
        const std::size_t P = 512, D = 16;
        Tensor pe = positional_encode(P, D);
        double min_gap = 1e300;
        for (std::size_t p = 0; p < P; ++p)
            for (std::size_t q = p + 1; q < P; ++q) {
                double s = 0;
                for (std::size_t d = 0; d < D; ++d) {
                    const double diff = pe.at2(p, d) - pe.at2(q, d);
                    s += diff * diff;
                }
                min_gap = std::min(min_gap, std::sqrt(s));
            }
        REQUIRE(min_gap > 1e-6);
    }
}

TEST_CASE("bottleneck projection") {
    RngStream rng(7);
    const std::size_t K = 16, N = 7, Dm = 64;
    BottleneckParams p = BottleneckParams::init(K * N, Dm, rng);
    REQUIRE(p.w1.shape() == Shape{112, 128});
    REQUIRE(p.w2.shape() == Shape{128, 64});
    {
        Graph g;
        ParamRegistry reg;
        p.register_params(reg, "bn");
        ParamBinding pb(g, reg);
        Var out = bottleneck_project(g, pb, p, g.constant(Tensor({2, 3, K * N})));
        REQUIRE(g.value(out).shape() == Shape{2, 3, Dm});
        REQUIRE(g.value(out).max_abs() == 0.0); // zero input, zero biases
    }
    {
        BottleneckParams small = BottleneckParams::init(6, 4, rng);
        Tensor x = rng.normal_tensor({1, 2, 6});
        auto build = [&x](Graph& g, const std::vector<Var>& v) {
            Var h = affine3(g, gelu(g, affine3(g, g.constant(x), v[0], v[1])), v[2], v[3]);
            return sum_all(g, mul(g, h, h));
        };
        REQUIRE(grad_check(build, {small.w1, small.b1, small.w2, small.b2}).max_rel_err < 1e-4);
    }
}

TEST_CASE("stma temporal-distance bias buckets") {
    REQUIRE(stma_bucket(0) == 0);
    REQUIRE(stma_bucket(1) == 1);
    REQUIRE(stma_bucket(2) == 2);
    REQUIRE(stma_bucket(3) == 3);
    REQUIRE(stma_bucket(4) == 3);
    REQUIRE(stma_bucket(5) == 4);
    REQUIRE(stma_bucket(8) == 4);
    REQUIRE(stma_bucket(9) == 5);
    REQUIRE(stma_bucket(16) == 5);
    REQUIRE(stma_bucket(17) == 6);
    REQUIRE(stma_bucket(31) == 6);
    REQUIRE(stma_bucket_count(32) == 7);

    RngStream rng(11);
    const std::size_t P = 12;
    StmaBiasParams p = StmaBiasParams::init(P);
    p.bias = rng.normal_tensor({stma_bucket_count(P)});
    Graph g;
    ParamRegistry reg;
    p.register_params(reg, "stma");
    ParamBinding pb(g, reg);
    const Tensor& r = g.value(stma_bias(g, pb, p, P));
    for (std::size_t i = 0; i < P; ++i) {
        REQUIRE(r.at2(i, i) == p.bias[0]); // shared diagonal parameter
        for (std::size_t j = 0; j < P; ++j) REQUIRE(r.at2(i, j) == r.at2(j, i));
    }

    auto build = [P](Graph& gg, const std::vector<Var>& v) {
        std::vector<std::size_t> index(P * P);
        for (std::size_t i = 0; i < P; ++i)
            for (std::size_t j = 0; j < P; ++j) index[i * P + j] = stma_bucket(i >= j ? i - j : j - i);
        Var r = gather_index(gg, v[0], index, {P, P});
        return sum_all(gg, mul(gg, r, r));
    };
    REQUIRE(grad_check(build, {p.bias}).max_rel_err < 1e-4);
}
