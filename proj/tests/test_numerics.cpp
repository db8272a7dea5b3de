#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "ddt/fft.hpp"
#include "ddt/gradcheck.hpp"
#include "ddt/ops.hpp"
#include "ddt/rng.hpp"

using namespace ddt;

namespace {

// Brute-force O(T^2) DFT with the same unitary 1/sqrt(T) convention;
// independent reference for fft_1d.
std::vector<cdouble> naive_dft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<cdouble> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cdouble acc(0, 0);
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * M_PI * double(k) * double(t) / double(n);
            acc += x[t] * cdouble(std::cos(ang), std::sin(ang));
        }
        out[k] = acc / std::sqrt(double(n));
    }
    return out;
}

// Direct-summation dilated convolution (same padding), reference for conv1d.
Tensor naive_conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t dil, bool causal) {
    const std::size_t B = x.dim(0), L = x.dim(1), Cin = x.dim(2);
    const std::size_t k = w.dim(0), Cout = w.dim(2);
    const std::ptrdiff_t pl = std::ptrdiff_t((causal ? (k - 1) : (k - 1) / 2) * dil);
    Tensor y({B, L, Cout});
    for (std::size_t bi = 0; bi < B; ++bi)
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t co = 0; co < Cout; ++co) {
                double acc = b[co];
                for (std::size_t j = 0; j < k; ++j)
                    for (std::size_t ci = 0; ci < Cin; ++ci) {
                        const std::ptrdiff_t s = std::ptrdiff_t(t) + std::ptrdiff_t(j * dil) - pl;
                        if (s < 0 || s >= std::ptrdiff_t(L)) continue;
                        acc += x.at3(bi, std::size_t(s), ci) * w.at3(j, ci, co);
                    }
                y.at3(bi, t, co) = acc;
            }
    return y;
}

double check_op(const LossBuilder& build, std::vector<Tensor> point) {
    return grad_check(build, std::move(point)).max_rel_err;
}

} // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3});
    REQUIRE(t.numel() == 6);
    t.at2(1, 2) = 5.0;
    REQUIRE(t[5] == 5.0);
    REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
    REQUIRE_THROWS_AS(t.item(), ShapeError);
    REQUIRE(Tensor::scalar(3.5).item() == 3.5);
}

TEST_CASE("matmul identity and shape errors") {
    Graph g;
    Var a = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Var i = g.constant(Tensor::identity(2));
    Var y = matmul(g, a, i);
    REQUIRE(g.value(y).vec() == std::vector<double>{1, 2, 3, 4});

    Var bad = g.constant(Tensor({3, 2}));
    REQUIRE_THROWS_AS(matmul(g, a, bad), ShapeError);
}

TEST_CASE("softmax symmetry, masking and distribution invariants") {
    Graph g;
    Var v = g.leaf(Tensor({3}, {0, 0, 0}));
    Var p = softmax_rows(g, v);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(g.value(p)[i] == Catch::Approx(1.0 / 3.0).margin(1e-15));

    // masked entries are exactly zero; rows sum to 1
    RngStream rng(7);
    Tensor x = rng.normal_tensor({5, 6});
    x.at2(0, 3) = kNegInf;
    x.at2(2, 0) = kNegInf;
    x.at2(2, 1) = kNegInf;
    Graph g2;
    Var pm = softmax_rows(g2, g2.leaf(x));
    const Tensor& pv = g2.value(pm);
    REQUIRE(pv.at2(0, 3) == 0.0);
    REQUIRE(pv.at2(2, 0) == 0.0);
    REQUIRE(pv.at2(2, 1) == 0.0);
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 6; ++c) {
            REQUIRE(pv.at2(r, c) >= 0.0);
            s += pv.at2(r, c);
        }
        REQUIRE(s == Catch::Approx(1.0).margin(1e-9));
    }

    // fully masked row comes back as zeros
    Tensor all_masked = Tensor::full({1, 4}, kNegInf);
    Graph g3;
    const Tensor& z = g3.value(softmax_rows(g3, g3.leaf(all_masked)));
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(z[i] == 0.0);
}

TEST_CASE("analytic derivative spot checks") {
    {
        Graph g;
        Var x = g.leaf(Tensor::scalar(3.0));
        Var y = mul(g, x, x);
        g.backward(y);
        REQUIRE(g.grad(x).item() == Catch::Approx(6.0).margin(1e-12));
    }
    {
        Graph g;
        Var x = g.leaf(Tensor::scalar(0.0));
        Var y = sigmoid(g, x);
        REQUIRE(g.value(y).item() == 0.5);
        g.backward(y);
        REQUIRE(g.grad(x).item() == Catch::Approx(0.25).margin(1e-12));
    }
    {
        // softmax rows sum to one, so the gradient of their sum vanishes
        Graph g;
        Var v = g.leaf(Tensor({4}, {0.3, -1.2, 0.8, 2.0}));
        Var s = sum_all(g, softmax_rows(g, v));
        g.backward(s);
        Tensor gv = g.grad(v);
        for (std::size_t i = 0; i < 4; ++i) REQUIRE(std::abs(gv[i]) < 1e-12);
    }
}

TEST_CASE("backward before forward raises") {
    Graph g;
    REQUIRE_THROWS_AS(g.backward(0), GraphError);
    Var v = g.leaf(Tensor({2}, {1, 2}));
    REQUIRE_THROWS_AS(g.backward(v), GraphError); // non-scalar output
}

TEST_CASE("grad_check on x^2 at 3") {
    auto build = [](Graph& g, const std::vector<Var>& v) { return mul(g, v[0], v[0]); };
    auto res = grad_check(build, {Tensor::scalar(3.0)});
    REQUIRE(res.max_rel_err < 1e-7);
}

TEST_CASE("gradient checks across primitive ops at random points") {
    RngStream rng(42);
    const int points = 5;

    auto sweep = [&](const char* name, const LossBuilder& build, auto make_point, double tol = 1e-4) {
        INFO(name);
        for (int p = 0; p < points; ++p) {
            double err = check_op(build, make_point());
            INFO("point " << p << " err " << err);
            REQUIRE(err < tol);
        }
    };

    auto rnd = [&](Shape s) { return rng.uniform_tensor(std::move(s), -1.5, 1.5); };
    auto rnd_pos = [&](Shape s) { return rng.uniform_tensor(std::move(s), 0.2, 2.0); };

    sweep("add_broadcast",
          [](Graph& g, const std::vector<Var>& v) { return sum_all(g, mul(g, add(g, v[0], v[1]), v[2])); },
          [&] { return std::vector<Tensor>{rnd({2, 3, 4}), rnd({3, 1}), rnd({2, 3, 4})}; });
    sweep("sub_mul_div",
          [](Graph& g, const std::vector<Var>& v) {
              return mean_all(g, div_op(g, sub(g, v[0], v[1]), v[2]));
          },
          [&] { return std::vector<Tensor>{rnd({4, 3}), rnd({3}), rnd_pos({4, 3})}; });
    sweep("maximum",
          [](Graph& g, const std::vector<Var>& v) { return sum_all(g, maximum(g, v[0], v[1])); },
          [&] { return std::vector<Tensor>{rnd({5, 2}), rnd({5, 2})}; });
    sweep("unary_chain",
          [](Graph& g, const std::vector<Var>& v) {
              Var a = tanh_op(g, v[0]);
              Var b = sigmoid(g, a);
              Var c = gelu(g, b);
              Var d = softplus(g, c);
              return sum_all(g, mul(g, d, exp_op(g, mul_scalar(g, v[0], 0.3))));
          },
          [&] { return std::vector<Tensor>{rnd({3, 4})}; });
    sweep("log_sqrt",
          [](Graph& g, const std::vector<Var>& v) {
              return sum_all(g, log_op(g, sqrt_op(g, add_scalar(g, v[0], 0.0))));
          },
          [&] { return std::vector<Tensor>{rnd_pos({6})}; });
    sweep("relu",
          [](Graph& g, const std::vector<Var>& v) { return sum_all(g, relu(g, v[0])); },
          [&] { return std::vector<Tensor>{rnd({7})}; });

    for (bool ta : {false, true})
        for (bool tb : {false, true}) {
            std::string nm = "matmul_" + std::to_string(ta) + std::to_string(tb);
            sweep(nm.c_str(),
                  [ta, tb](Graph& g, const std::vector<Var>& v) {
                      return sum_all(g, mul(g, matmul(g, v[0], v[1], ta, tb), v[2]));
                  },
                  [&, ta, tb] {
                      Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
                      Shape sb = tb ? Shape{2, 4} : Shape{4, 2};
                      return std::vector<Tensor>{rnd(sa), rnd(sb), rnd({3, 2})};
                  });
            sweep(("bmm_" + std::to_string(ta) + std::to_string(tb)).c_str(),
                  [ta, tb](Graph& g, const std::vector<Var>& v) {
                      return sum_all(g, mul(g, bmm(g, v[0], v[1], ta, tb), v[2]));
                  },
                  [&, ta, tb] {
                      Shape sa = ta ? Shape{2, 4, 3} : Shape{2, 3, 4};
                      Shape sb = tb ? Shape{2, 2, 4} : Shape{2, 4, 2};
                      return std::vector<Tensor>{rnd(sa), rnd(sb), rnd({2, 3, 2})};
                  });
        }

    sweep("reshape_permute_slice_concat",
          [](Graph& g, const std::vector<Var>& v) {
              Var r = reshape(g, v[0], {4, 6});
              Var p = permute(g, reshape(g, v[0], {2, 3, 4}), {2, 0, 1});
              Var s = slice(g, r, 1, 1, 3);
              Var c = concat(g, {s, slice(g, r, 1, 0, 3)}, 1);
              return add(g, sum_all(g, c), sum_all(g, mul(g, p, p)));
          },
          [&] { return std::vector<Tensor>{rnd({24})}; });

    sweep("reduce_sum_axes",
          [](Graph& g, const std::vector<Var>& v) {
              Var s1 = reduce_sum(g, v[0], {1}, true);
              Var s2 = reduce_mean(g, v[0], {0, 2}, false);
              return add(g, sum_all(g, mul(g, s1, s1)), sum_all(g, mul(g, s2, s2)));
          },
          [&] { return std::vector<Tensor>{rnd({2, 3, 4})}; });

    sweep("softmax_masked",
          [](Graph& g, const std::vector<Var>& v) {
              Tensor mask({3, 4});
              mask.at2(0, 3) = kNegInf;
              mask.at2(1, 0) = kNegInf;
              Var m = g.constant(mask);
              Var p = softmax_rows(g, add(g, v[0], m));
              return sum_all(g, mul(g, p, v[1]));
          },
          [&] { return std::vector<Tensor>{rnd({3, 4}), rnd({3, 4})}; });

    for (auto pad : {ConvPad::same, ConvPad::causal})
        sweep(pad == ConvPad::same ? "conv1d_same" : "conv1d_causal",
              [pad](Graph& g, const std::vector<Var>& v) {
                  Var y = conv1d(g, v[0], v[1], v[2], 2, pad);
                  return sum_all(g, mul(g, y, y));
              },
              [&] { return std::vector<Tensor>{rnd({2, 8, 3}), rnd({3, 3, 2}), rnd({2})}; });

    sweep("diag_embed_gather",
          [](Graph& g, const std::vector<Var>& v) {
              Var d = diag_embed(g, v[0]);
              Var ge = gather_index(g, v[1], {0, 2, 1, 1, 0, 2}, {2, 3});
              return add(g, sum_all(g, mul(g, d, d)), sum_all(g, mul(g, ge, ge)));
          },
          [&] { return std::vector<Tensor>{rnd({4}), rnd({3})}; });

    sweep("straight_through_identity_backward",
          [&rng](Graph& g, const std::vector<Var>& v) {
              // hard values differ from relaxed; backward must be identity,
              // which matches finite differences of this linear composition
              Var st = straight_through(g, v[0], g.value(v[0]));
              return sum_all(g, mul(g, st, v[1]));
          },
          [&] { return std::vector<Tensor>{rnd({3, 3}), rnd({3, 3})}; });
}

TEST_CASE("fft impulse, DC, and naive DFT oracle") {
    auto imp = fft_1d({1, 0, 0, 0});
    for (auto& v : imp) {
        REQUIRE(v.real() == Catch::Approx(0.5).margin(1e-14));
        REQUIRE(std::abs(v.imag()) < 1e-14);
    }
    const double c = 1.7;
    auto dc = fft_1d({c, c, c, c});
    REQUIRE(dc[0].real() == Catch::Approx(2 * c).margin(1e-12));
    for (std::size_t k = 1; k < 4; ++k) REQUIRE(std::abs(dc[k]) < 1e-12);

    RngStream rng(3);
    for (std::size_t n : {8ul, 5ul, 12ul, 7ul, 16ul}) {
        std::vector<double> x(n);
        for (auto& v : x) v = rng.uniform(-2, 2);
        auto got = fft_1d(x);
        auto want = naive_dft(x);
        for (std::size_t k = 0; k < n; ++k) REQUIRE(std::abs(got[k] - want[k]) < 1e-12);
    }
}

TEST_CASE("fft inverse round trip preserves the signal and its energy") {
    RngStream rng(11);
    for (std::size_t n : {4ul, 9ul, 32ul, 15ul}) {
        std::vector<double> x(n);
        for (auto& v : x) v = rng.normal();
        auto spec = fft_1d(x);
        double ein = 0, espec = 0;
        for (double v : x) ein += v * v;
        for (auto& v : spec) espec += std::norm(v);
        REQUIRE(espec == Catch::Approx(ein).margin(1e-10)); // Parseval under unitary scaling
        auto back = ifft_1d(spec);
        for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(back[i].real() - x[i]) < 1e-10);
    }
}

TEST_CASE("dilated conv1d identity, zero input, and naive oracle") {
    {
        Graph g;
        Var x = g.leaf(Tensor({1, 5, 1}, {1, 2, 3, 4, 5}));
        Var w = g.constant(Tensor({1, 1, 1}, {1.0}));
        Var b = g.constant(Tensor({1}));
        const Tensor& y = g.value(conv1d(g, x, w, b, 1));
        REQUIRE(y.vec() == std::vector<double>{1, 2, 3, 4, 5});
    }
    {
        Graph g;
        Var x = g.constant(Tensor({2, 6, 2}));
        RngStream rng(5);
        Var w = g.constant(rng.normal_tensor({3, 2, 4}));
        Var b = g.constant(Tensor({4}));
        REQUIRE(g.value(conv1d(g, x, w, b, 2)).max_abs() == 0.0);
    }
    {
        Graph g;
        REQUIRE_THROWS_AS(conv1d(g, g.constant(Tensor({1, 4, 1})), g.constant(Tensor({2, 1, 1})),
                                 g.constant(Tensor({1})), 1),
                          ShapeError);
    }
    RngStream rng(17);
    Tensor x = rng.normal_tensor({1, 8, 1});
    Tensor w = rng.normal_tensor({3, 1, 1});
    Tensor b = rng.normal_tensor({1});
    for (bool causal : {false, true}) {
        Graph g;
        const Tensor& y = g.value(
            conv1d(g, g.leaf(x), g.leaf(w), g.leaf(b), 2, causal ? ConvPad::causal : ConvPad::same));
        Tensor want = naive_conv1d(x, w, b, 2, causal);
        for (std::size_t i = 0; i < y.numel(); ++i)
            REQUIRE(y[i] == Catch::Approx(want[i]).margin(1e-12));
    }
}

TEST_CASE("rng determinism and gumbel statistics") {
    REQUIRE(RngStream::gumbel_from_uniform(0.5) == Catch::Approx(-std::log(std::log(2.0))).margin(1e-12));

    RngStream a(123), b(123);
    Tensor ta = gumbel_draw(a, {4, 5});
    Tensor tb = gumbel_draw(b, {4, 5});
    REQUIRE(ta.vec() == tb.vec());

    RngStream c(99);
    double mean = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) mean += c.gumbel();
    mean /= n;
    REQUIRE(mean == Catch::Approx(0.5772156649).margin(0.02)); // Euler-Mascheroni

    // uniforms stay strictly inside (0,1)
    RngStream d(1);
    for (int i = 0; i < 10000; ++i) {
        double u = d.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("forward evaluation is deterministic") {
    RngStream rng(2024);
    Tensor x = rng.normal_tensor({3, 4});
    Tensor w = rng.normal_tensor({4, 2});
    auto run = [&] {
        Graph g;
        Var y = softmax_rows(g, matmul(g, g.leaf(x), g.leaf(w)));
        return g.value(y).vec();
    };
    REQUIRE(run() == run());
}
