#ifndef DDT_DATA_GRANGER_HPP
#define DDT_DATA_GRANGER_HPP

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ddt/data/stats.hpp"
#include "ddt/linalg.hpp"

namespace ddt {
namespace data {

struct GrangerResult {
    double f_stat = 0;
    double p_value = 1;
    bool rank_warning = false; // design was rank-deficient, solved with ridge
    std::size_t lag = 0;
};

namespace detail {

/// OLS residual sum of squares via normal equations; ridge on failure.
inline double ols_rss(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                      bool& rank_warning) {
    const std::size_t n = X.size(), p = X[0].size();
    std::vector<double> xtx(p * p, 0.0), xty(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 0; a < p; ++a) {
            xty[a] += X[i][a] * y[i];
            for (std::size_t b = a; b < p; ++b) xtx[a * p + b] += X[i][a] * X[i][b];
        }
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < a; ++b) xtx[a * p + b] = xtx[b * p + a];

    std::vector<double> beta = xty;
    if (!la::solve_spd(xtx, p, beta)) {
        rank_warning = true;
        beta = xty;
        if (!la::solve_spd(xtx, p, beta, 1e-8))
            throw std::runtime_error("granger_screen: normal equations unsolvable even with ridge");
    }
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = 0;
        for (std::size_t a = 0; a < p; ++a) pred += X[i][a] * beta[a];
        const double r = y[i] - pred;
        rss += r * r;
    }
    return rss;
}

} // namespace detail

/// Granger screen: F test of x's lags adding predictive power for y beyond
/// y's own lags. Reports the statistic; channel dropping is the caller's call.
inline GrangerResult granger_screen(const std::vector<double>& x, const std::vector<double>& y,
                                    std::size_t p) {
    if (p < 1) throw std::invalid_argument("granger_screen: lag order must be >= 1");
    if (x.size() != y.size()) throw std::invalid_argument("granger_screen: series lengths differ");
    if (y.size() <= 10 * p)
        throw std::invalid_argument("granger_screen: need length > 10*lag, got " + std::to_string(y.size()));

    const std::size_t n = y.size() - p;
    std::vector<std::vector<double>> Xr(n), Xu(n);
    std::vector<double> yy(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = i + p;
        yy[i] = y[t];
        Xr[i].push_back(1.0);
        for (std::size_t l = 1; l <= p; ++l) Xr[i].push_back(y[t - l]);
        Xu[i] = Xr[i];
        for (std::size_t l = 1; l <= p; ++l) Xu[i].push_back(x[t - l]);
    }

    GrangerResult res;
    res.lag = p;
    const double rss_r = detail::ols_rss(Xr, yy, res.rank_warning);
    const double rss_u = detail::ols_rss(Xu, yy, res.rank_warning);
    const double d1 = static_cast<double>(p);
    const double d2 = static_cast<double>(n) - (2.0 * p + 1.0);
    if (d2 <= 0) throw std::invalid_argument("granger_screen: not enough rows for the unrestricted model");
    const double denom = std::max(rss_u, 1e-300);
    res.f_stat = ((rss_r - rss_u) / d1) / (denom / d2);
    if (res.f_stat < 0) res.f_stat = 0; // numerical guard; nested models
    res.p_value = stats::f_sf(res.f_stat, d1, d2);
    return res;
}

} // namespace data
} // namespace ddt

#endif
