#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "ddt/data/augment.hpp"
#include "ddt/data/csv.hpp"
#include "ddt/data/granger.hpp"
#include "ddt/data/impute.hpp"
#include "ddt/data/outliers.hpp"
#include "ddt/data/split.hpp"
#include "ddt/data/standardize.hpp"
#include "ddt/rng.hpp"

using namespace ddt;
using namespace ddt::data;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    std::string path = std::string("/tmp/ddt_test_") + name;
    std::ofstream out(path);
    out << content;
    return path;
}

// Independent brute-force LOF: textbook formulation, full sorts, no shared
// code with the library implementation.
std::vector<double> lof_bruteforce(const std::vector<std::vector<double>>& pts, std::size_t k) {
    const std::size_t m = pts.size();
    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0;
        for (std::size_t c = 0; c < pts[i].size(); ++c) s += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
        return std::max(std::sqrt(s), 1e-12);
    };
    auto kdist = [&](std::size_t i) {
        std::vector<double> ds;
        for (std::size_t j = 0; j < m; ++j)
            if (j != i) ds.push_back(dist(i, j));
        std::sort(ds.begin(), ds.end());
        return ds[k - 1];
    };
    auto neighbors = [&](std::size_t i) {
        std::vector<std::size_t> nb;
        const double kd = kdist(i);
        for (std::size_t j = 0; j < m; ++j)
            if (j != i && dist(i, j) <= kd) nb.push_back(j);
        return nb;
    };
    auto lrd = [&](std::size_t i) {
        auto nb = neighbors(i);
        double s = 0;
        for (std::size_t j : nb) s += std::max(kdist(j), dist(i, j));
        return static_cast<double>(nb.size()) / std::max(s, 1e-12);
    };
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto nb = neighbors(i);
        double s = 0;
        for (std::size_t j : nb) s += lrd(j);
        out[i] = s / (static_cast<double>(nb.size()) * std::max(lrd(i), 1e-12));
    }
    return out;
}

// Exhaustive DTW: minimum path cost over all monotone alignments.
double dtw_exhaustive(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size(), m = b.size();
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j,
                                                                     double acc) {
        acc += std::abs(a[i] - b[j]);
        if (acc >= best) return;
        if (i == n - 1 && j == m - 1) {
            best = acc;
            return;
        }
        if (i + 1 < n) walk(i + 1, j, acc);
        if (j + 1 < m) walk(i, j + 1, acc);
        if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

// Exact GP posterior by Gaussian elimination, independent of the Cholesky
// path used in the library.
void gp_exact(const std::vector<double>& t_obs, const std::vector<double>& y_obs, double ls, double nv,
              double t_star, double& mean, double& var) {
    const std::size_t n = t_obs.size();
    double m0 = 0;
    for (double v : y_obs) m0 += v;
    m0 /= n;
    double sf2 = 0;
    for (double v : y_obs) sf2 += (v - m0) * (v - m0);
    sf2 = std::max(sf2 / n, 1e-12);
    auto kern = [&](double x, double y) {
        const double d = (x - y) / ls;
        return sf2 * std::exp(-0.5 * d * d);
    };
    // augmented system [K+nvI | y-m, k*]
    std::vector<std::vector<double>> A(n, std::vector<double>(n + 2));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) A[i][j] = kern(t_obs[i], t_obs[j]) + (i == j ? nv : 0.0);
        A[i][n] = y_obs[i] - m0;
        A[i][n + 1] = kern(t_obs[i], t_star);
    }
    for (std::size_t c = 0; c < n; ++c) { // partial pivoting
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = A[r][c] / A[c][c];
            for (std::size_t j = c; j < n + 2; ++j) A[r][j] -= f * A[c][j];
        }
    }
    mean = m0;
    var = sf2;
    for (std::size_t i = 0; i < n; ++i) {
        const double ai = A[i][n] / A[i][i];
        const double bi = A[i][n + 1] / A[i][i];
        mean += kern(t_star, t_obs[i]) * ai;
        var -= kern(t_star, t_obs[i]) * bi;
    }
}

} // namespace

TEST_CASE("load_csv parses ETT layout and flags gaps") {
    auto path = write_temp("ok.csv", "date,HUFL,OT\n"
                                     "2016-07-01 00:00:00,5.827,30.531\n"
                                     "2016-07-01 01:00:00,5.693,27.787\n"
                                     "2016-07-01 02:00:00,5.157,27.787\n");
    SeriesBatch sb = load_csv(path);
    REQUIRE(sb.batch() == 1);
    REQUIRE(sb.length() == 3);
    REQUIRE(sb.channels() == 2);
    REQUIRE(sb.values.at3(0, 0, 1) == 30.531);
    REQUIRE(sb.timestamps[1] - sb.timestamps[0] == 3600);
    REQUIRE(sb.missing_count() == 0);

    auto gap = write_temp("gap.csv", "date,a,b\n"
                                     "2020-01-01 00:00,1,2\n"
                                     "2020-01-01 01:00,,3\n"
                                     "2020-01-01 02:00,4,5\n");
    SeriesBatch g = load_csv(gap);
    REQUIRE(g.missing_count() == 1);
    REQUIRE(g.is_missing(0, 1, 0));
    REQUIRE(std::isnan(g.values.at3(0, 1, 0)));

    auto bad = write_temp("bad.csv", "date,a\n"
                                     "2020-01-02 00:00,1\n"
                                     "2020-01-01 00:00,2\n");
    try {
        load_csv(bad);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        REQUIRE(std::string(e.what()).find("row 2") != std::string::npos);
    }

    auto ragged = write_temp("ragged.csv", "date,a,b\n2020-01-01,1,2\n2020-01-02,3\n");
    REQUIRE_THROWS_AS(load_csv(ragged), IoError);

    CsvSchema schema;
    schema.roles["b"] = ChannelRole::covariate_weather;
    SeriesBatch s2 = load_csv(gap, schema);
    REQUIRE(s2.roles[0] == ChannelRole::target);
    REQUIRE(s2.roles[1] == ChannelRole::covariate_weather);
}

TEST_CASE("lof matches brute force and isolates outliers") {
    {
        Tensor pts({4, 2}, {0, 0, 1, 1, 2, 2, 3, 3});
        auto scores = lof_scores(pts, 2);
        auto ref = lof_bruteforce({{0, 0}, {1, 1}, {2, 2}, {3, 3}}, 2);
        for (std::size_t i = 0; i < 4; ++i) {
            REQUIRE(scores[i] == Catch::Approx(ref[i]).margin(1e-9));
            REQUIRE(scores[i] > 0.8);
            REQUIRE(scores[i] < 1.2);
        }
    }
    {
        Tensor pts({4, 1}, {0.0, 0.1, 0.2, 10.0});
        auto s = lof_scores(pts, 2);
        REQUIRE(s[3] > 2.0 * std::max({s[0], s[1], s[2]}));
    }
    {
        Tensor pts({4, 1}, {1.0, 1.0, 2.0, 3.0}); // duplicates among k+1
        auto s = lof_scores(pts, 2);
        for (double v : s) REQUIRE(std::isfinite(v));
    }
    {
        RngStream rng(5);
        Tensor pts = rng.normal_tensor({60, 3});
        std::vector<std::vector<double>> ref_pts(60, std::vector<double>(3));
        for (std::size_t i = 0; i < 60; ++i)
            for (std::size_t j = 0; j < 3; ++j) ref_pts[i][j] = pts.at2(i, j);
        auto got = lof_scores(pts, 5);
        auto ref = lof_bruteforce(ref_pts, 5);
        for (std::size_t i = 0; i < 60; ++i) REQUIRE(got[i] == Catch::Approx(ref[i]).margin(1e-9));
    }
    REQUIRE_THROWS_AS(lof_scores(Tensor({3, 1}), 3), std::invalid_argument);
}

TEST_CASE("gp imputation: symmetry, prior limit, and exact-solve oracle") {
    {
        // symmetric neighbors with equal values impute that value
        std::vector<double> y = {2.0, 0.0, 2.0};
        std::vector<std::uint8_t> miss = {0, 1, 0};
        auto r = impute_gp(y, miss, 1.0, 1e-6);
        REQUIRE(r.gaps_filled == 1);
        REQUIRE(r.filled[1] == Catch::Approx(2.0).margin(1e-9));

        // a fully symmetric observation pattern with equal flanking values
        std::vector<double> y2 = {1.25, 2.0, 0.0, 2.0, 1.25};
        std::vector<std::uint8_t> miss2 = {0, 0, 1, 0, 0};
        auto r2 = impute_gp(y2, miss2, 1.5, 1e-6);
        double mean, var;
        gp_exact({0, 1, 3, 4}, {1.25, 2.0, 2.0, 1.25}, 1.5, 1e-6, 2.0, mean, var);
        REQUIRE(r2.filled[2] == Catch::Approx(mean).margin(1e-9));
    }
    {
        // gap far beyond the lengthscale reverts to the prior
        std::vector<double> y(60, 0.0);
        std::vector<std::uint8_t> miss(60, 0);
        RngStream rng(3);
        for (std::size_t i = 0; i < 20; ++i) y[i] = 1.0 + 0.1 * rng.normal();
        for (std::size_t i = 20; i < 60; ++i) miss[i] = 1;
        auto r = impute_gp(y, miss, 2.0, 1e-4);
        double prior_mean = 0;
        for (std::size_t i = 0; i < 20; ++i) prior_mean += y[i] / 20.0;
        double prior_var = 0;
        for (std::size_t i = 0; i < 20; ++i) prior_var += (y[i] - prior_mean) * (y[i] - prior_mean) / 20.0;
        REQUIRE(r.filled[59] == Catch::Approx(prior_mean).margin(1e-6));
        REQUIRE(r.variance[59] == Catch::Approx(prior_var).margin(1e-6));
    }
    {
        // one missing sample of a dense sinusoid, lengthscale = period/4
        const std::size_t n = 64, period = 16;
        std::vector<double> y(n);
        std::vector<std::uint8_t> miss(n, 0);
        for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(2 * M_PI * double(i) / period);
        const double truth = y[40];
        miss[40] = 1;
        auto r = impute_gp(y, miss, period / 4.0, 1e-6);
        REQUIRE(std::abs(r.filled[40] - truth) < 0.05);
    }
    {
        // matches an independent exact solve
        RngStream rng(9);
        std::vector<double> y(30), t_obs;
        std::vector<std::uint8_t> miss(30, 0);
        for (std::size_t i = 0; i < 30; ++i) y[i] = std::cos(0.3 * i) + 0.05 * rng.normal();
        miss[7] = miss[8] = miss[21] = 1;
        auto r = impute_gp(y, miss, 3.0, 1e-4);
        std::vector<double> yo;
        for (std::size_t i = 0; i < 30; ++i)
            if (!miss[i]) {
                t_obs.push_back(double(i));
                yo.push_back(y[i]);
            }
        for (std::size_t gap : {7ul, 8ul, 21ul}) {
            double mean, var;
            gp_exact(t_obs, yo, 3.0, 1e-4, double(gap), mean, var);
            REQUIRE(r.filled[gap] == Catch::Approx(mean).margin(1e-8));
            REQUIRE(r.variance[gap] == Catch::Approx(var).margin(1e-8));
        }
    }
    REQUIRE_THROWS_AS(impute_gp({1.0}, {0}, 1.0, 1e-6), std::invalid_argument);
}

TEST_CASE("gev quantile closed form and filter behavior") {
    GevFit gumbel{0.0, 1.0, 0.0, true, 0.0};
    REQUIRE(gev_quantile(gumbel, 0.99) == Catch::Approx(-std::log(-std::log(0.99))).margin(1e-12));
    REQUIRE(gev_quantile(gumbel, 0.99) == Catch::Approx(4.60015).margin(1e-4));

    {
        std::vector<double> cst(100, 3.3);
        auto r = gev_boxplot_filter(cst, 0.01);
        REQUIRE(r.removed == 0);
    }
    {
        RngStream rng(12);
        std::vector<double> x(1000);
        for (auto& v : x) v = rng.normal();
        x[500] = 50.0;
        auto r = gev_boxplot_filter(x, 0.01);
        REQUIRE(r.removed == 1);
        REQUIRE(r.keep[500] == 0);
    }
    {
        // GEV fit sanity: Gumbel data recovers parameters roughly
        RngStream rng(77);
        std::vector<double> g(4000);
        for (auto& v : g) v = -std::log(-std::log(rng.uniform()));
        GevFit fit = gev_fit_mle(g);
        REQUIRE(fit.converged);
        REQUIRE(fit.mu == Catch::Approx(0.0).margin(0.1));
        REQUIRE(fit.sigma == Catch::Approx(1.0).margin(0.1));
        REQUIRE(std::abs(fit.xi) < 0.1);
    }
    REQUIRE_THROWS_AS(gev_boxplot_filter(std::vector<double>(10, 1.0), 0.01), std::invalid_argument);
}

TEST_CASE("zscore analytic values, constant flag, idempotence") {
    Tensor x({1, 3, 1}, {1, 2, 3});
    auto st = zscore_fit(x);
    Tensor z = zscore_apply(x, st);
    REQUIRE(z[0] == Catch::Approx(-1.224744871).margin(1e-8));
    REQUIRE(z[1] == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(z[2] == Catch::Approx(1.224744871).margin(1e-8));

    Tensor c({1, 4, 1}, {5, 5, 5, 5});
    auto stc = zscore_fit(c);
    REQUIRE(stc.constant[0] == 1);
    REQUIRE(zscore_apply(c, stc).vec() == c.vec());

    auto st2 = zscore_fit(z);
    Tensor z2 = zscore_apply(z, st2);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(z2[i] == Catch::Approx(z[i]).margin(1e-12));

    Tensor back = zscore_invert(z, st);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(back[i] == Catch::Approx(x[i]).margin(1e-12));
}

TEST_CASE("wasserstein distance to standard normal") {
    {
        std::vector<double> grid(500);
        for (std::size_t i = 0; i < grid.size(); ++i)
            grid[i] = stats::norm_ppf((double(i) + 0.5) / grid.size());
        auto r = wasserstein_check(grid);
        REQUIRE(r.distance == Catch::Approx(0.0).margin(1e-12));
        REQUIRE(r.pass);
    }
    {
        RngStream rng(31);
        std::vector<double> x(1000);
        for (auto& v : x) v = rng.normal();
        auto r = wasserstein_check(x);
        REQUIRE(r.distance < 0.1);
    }
    {
        RngStream rng(32);
        std::vector<double> x(1000);
        for (auto& v : x) v = 3.0 + rng.normal();
        auto r = wasserstein_check(x);
        REQUIRE(r.distance == Catch::Approx(3.0).margin(0.1));
        REQUIRE_FALSE(r.pass);
    }
    REQUIRE_THROWS_AS(wasserstein_check(std::vector<double>(50, 0.0)), std::invalid_argument);
}

TEST_CASE("norm_ppf agrees with erfc round trip") {
    for (double p : {0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999}) {
        const double x = stats::norm_ppf(p);
        const double back = 0.5 * std::erfc(-x / std::sqrt(2.0));
        REQUIRE(back == Catch::Approx(p).margin(1e-12));
    }
}

TEST_CASE("dtw identities and exhaustive-path oracle") {
    RngStream rng(41);
    std::vector<double> a(10), b(10);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    REQUIRE(dtw_distance(a, a) == 0.0);
    REQUIRE(dtw_distance(a, b) == Catch::Approx(dtw_distance(b, a)).margin(1e-12));

    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + rng.index(5), m = 2 + rng.index(5);
        std::vector<double> u(n), v(m);
        for (auto& x : u) x = rng.uniform(-2, 2);
        for (auto& x : v) x = rng.uniform(-2, 2);
        REQUIRE(dtw_distance(u, v) == Catch::Approx(dtw_exhaustive(u, v)).margin(1e-12));
    }
}

TEST_CASE("augmentation: snr variance, identity warp, dtw proximity") {
    REQUIRE(snr_noise_variance(4.0, 20.0) == Catch::Approx(0.04).margin(1e-15));

    RngStream rng(55);
    Tensor x({32, 2});
    for (std::size_t t = 0; t < 32; ++t)
        for (std::size_t n = 0; n < 2; ++n) x.at2(t, n) = std::sin(0.3 * t + n) + 0.1 * rng.normal();
    std::vector<double> identity(32);
    for (std::size_t i = 0; i < 32; ++i) identity[i] = double(i);
    Tensor warped = warp_resample(x, identity);
    REQUIRE(warped.vec() == x.vec());

    // warp-augmented copies stay DTW-closer than independent series
    int wins = 0;
    for (int trial = 0; trial < 50; ++trial) {
        RngStream r2(1000 + trial);
        const std::size_t L = 48;
        std::vector<double> base(L), indep(L);
        for (std::size_t t = 0; t < L; ++t) {
            base[t] = std::sin(2 * M_PI * t / 12.0) + 0.1 * r2.normal();
            indep[t] = std::sin(2 * M_PI * t / 12.0 + M_PI * r2.uniform()) + 0.1 * r2.normal();
        }
        Tensor bt({L, 1}, base);
        AugmentSpec spec;
        spec.dtw_warp = true;
        Tensor aug = augment(bt, spec, r2);
        std::vector<double> augv(aug.vec());
        if (dtw_distance(base, augv) < dtw_distance(base, indep)) ++wins;
    }
    REQUIRE(wins >= 45);
}

TEST_CASE("stratified split: proportions, chronology, blob stratification") {
    {
        // 100 windows, single cluster: exact 70/15/15 chronological
        RngStream rng(2);
        Tensor w = rng.normal_tensor({100, 4});
        SplitSpec spec;
        spec.cluster_count = 1;
        auto r = stratified_split(w, spec);
        REQUIRE(r.train.size() == 70);
        REQUIRE(r.val.size() == 15);
        REQUIRE(r.test.size() == 15);
        REQUIRE(r.train.back() < r.val.front());
        REQUIRE(r.val.back() < r.test.front());
    }
    {
        // two well-separated blobs, k=2
        RngStream rng(8);
        const std::size_t n = 100;
        Tensor w({n, 3});
        std::vector<int> blob(n);
        for (std::size_t i = 0; i < n; ++i) {
            blob[i] = (rng.uniform() < 0.6) ? 0 : 1;
            for (std::size_t j = 0; j < 3; ++j)
                w.at2(i, j) = (blob[i] ? 20.0 : -20.0) + 0.5 * rng.normal();
        }
        SplitSpec spec;
        spec.cluster_count = 2;
        spec.seed = 7;
        auto r = stratified_split(w, spec);
        // disjoint + exhaustive
        REQUIRE(r.train.size() + r.val.size() + r.test.size() == n);
        std::vector<int> seen(n, 0);
        for (auto i : r.train) seen[i]++;
        for (auto i : r.val) seen[i]++;
        for (auto i : r.test) seen[i]++;
        for (std::size_t i = 0; i < n; ++i) REQUIRE(seen[i] == 1);
        // per-blob proportions within one window of 70/15/15
        for (int bl : {0, 1}) {
            double total = 0, tr = 0, va = 0, te = 0;
            for (std::size_t i = 0; i < n; ++i) total += (blob[i] == bl);
            for (auto i : r.train) tr += (blob[i] == bl);
            for (auto i : r.val) va += (blob[i] == bl);
            for (auto i : r.test) te += (blob[i] == bl);
            REQUIRE(std::abs(tr - 0.70 * total) <= 1.0);
            REQUIRE(std::abs(va - 0.15 * total) <= 1.0);
            REQUIRE(std::abs(te - 0.15 * total) <= 1.0);
        }
        // chronology within each cluster
        for (std::size_t c = 0; c < 2; ++c) {
            std::size_t max_tr = 0, min_va = n, min_te = n;
            bool any_tr = false, any_va = false, any_te = false;
            for (auto i : r.train)
                if (r.cluster_of[i] == c) {
                    max_tr = std::max(max_tr, i);
                    any_tr = true;
                }
            for (auto i : r.val)
                if (r.cluster_of[i] == c) {
                    min_va = std::min(min_va, i);
                    any_va = true;
                }
            for (auto i : r.test)
                if (r.cluster_of[i] == c) {
                    min_te = std::min(min_te, i);
                    any_te = true;
                }
            if (any_tr && any_va) REQUIRE(max_tr < min_va);
            if (any_va && any_te) REQUIRE(min_va < min_te);
        }
    }
    REQUIRE_THROWS_AS(stratified_split(Tensor({5, 2}), SplitSpec{}), std::invalid_argument);
}

TEST_CASE("window geometry") {
    LabelWindow w{96, 24, 8};
    auto starts = window_starts(200, w);
    REQUIRE(!starts.empty());
    for (auto s : starts) REQUIRE(s + 120 <= 200);
    REQUIRE(window_starts(100, w).size() == 0);
    REQUIRE(horizon_supported(96));
    REQUIRE_FALSE(horizon_supported(97));
}

TEST_CASE("granger causality screen") {
    {
        // y_t = x_{t-1} exactly: unrestricted fit is perfect
        RngStream rng(3);
        std::vector<double> x(300), y(300, 0.0);
        for (auto& v : x) v = rng.normal();
        for (std::size_t t = 1; t < 300; ++t) y[t] = x[t - 1];
        auto r = granger_screen(x, y, 1);
        REQUIRE(r.f_stat > 1e6);
        REQUIRE(r.p_value < 1e-12);
    }
    {
        // independent white noise: p-value above 0.01 in at least 95 of 100 trials
        int calm = 0;
        for (int trial = 0; trial < 100; ++trial) {
            RngStream rng(5000 + trial);
            std::vector<double> x(2000), y(2000);
            for (auto& v : x) v = rng.normal();
            for (auto& v : y) v = rng.normal();
            auto r = granger_screen(x, y, 2);
            if (r.p_value > 0.01) ++calm;
        }
        REQUIRE(calm >= 95);
    }
    {
        // constant regressor exercises the rank-deficiency path
        std::vector<double> x(200, 1.0), y(200);
        RngStream rng(6);
        for (auto& v : y) v = rng.normal();
        auto r = granger_screen(x, y, 2);
        REQUIRE(r.rank_warning);
        REQUIRE(std::isfinite(r.f_stat));
    }
    REQUIRE_THROWS_AS(granger_screen(std::vector<double>(15, 0.0), std::vector<double>(15, 0.0), 2),
                      std::invalid_argument);
}
