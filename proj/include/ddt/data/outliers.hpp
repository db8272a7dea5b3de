#ifndef DDT_DATA_OUTLIERS_HPP
#define DDT_DATA_OUTLIERS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ddt/data/stats.hpp"
#include "ddt/tensor.hpp"

namespace ddt {
namespace data {

// ---------------------------------------------------------------------------
// Local Outlier Factor
// ---------------------------------------------------------------------------

/// Classic LOF over M points of dimension d (row-major M x d). Scores near 1
/// mark inliers. Zero distances are floored at 1e-12 so duplicate points
/// keep densities finite.
inline std::vector<double> lof_scores(const Tensor& points, std::size_t k) {
    if (points.rank() != 2) throw ShapeError("lof_scores: expected M x d points, got " + shape_str(points.shape()));
    const std::size_t m = points.dim(0), d = points.dim(1);
    if (k < 1 || m <= k)
        throw std::invalid_argument("lof_scores: need M > k >= 1, got M=" + std::to_string(m) +
                                    " k=" + std::to_string(k));
    constexpr double kFloor = 1e-12;

    std::vector<double> dist(m * m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) {
            double s = 0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = points.at2(i, c) - points.at2(j, c);
                s += diff * diff;
            }
            const double dd = std::max(std::sqrt(s), kFloor);
            dist[i * m + j] = dd;
            dist[j * m + i] = dd;
        }

    // k-distance and neighbor sets (ties included, self excluded)
    std::vector<double> kdist(m);
    std::vector<std::vector<std::size_t>> nbrs(m);
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return dist[i * m + a] < dist[i * m + b]; });
        kdist[i] = dist[i * m + order[k - 1]];
        for (std::size_t j : order) {
            if (dist[i * m + j] <= kdist[i])
                nbrs[i].push_back(j);
            else
                break;
        }
        order.insert(order.begin() + static_cast<std::ptrdiff_t>(i), i);
    }

    std::vector<double> lrd(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::size_t j : nbrs[i]) s += std::max(kdist[j], dist[i * m + j]); // reachability distance
        lrd[i] = static_cast<double>(nbrs[i].size()) / std::max(s, kFloor);
    }

    std::vector<double> lof(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0;
        for (std::size_t j : nbrs[i]) s += lrd[j];
        lof[i] = s / (static_cast<double>(nbrs[i].size()) * std::max(lrd[i], kFloor));
    }
    return lof;
}

// ---------------------------------------------------------------------------
// GEV + boxplot anomaly filter
// ---------------------------------------------------------------------------

struct GevFit {
    double mu = 0, sigma = 1, xi = 0;
    bool converged = false;
    double nll = 0;
};

namespace detail {

inline double gev_nll(const std::vector<double>& x, double mu, double sigma, double xi) {
    if (!(sigma > 0)) return std::numeric_limits<double>::infinity();
    double nll = 0;
    if (std::abs(xi) < 1e-8) {
        for (double v : x) {
            const double z = (v - mu) / sigma;
            nll += std::log(sigma) + z + std::exp(-z);
        }
    } else {
        for (double v : x) {
            const double t = 1.0 + xi * (v - mu) / sigma;
            if (!(t > 0)) return std::numeric_limits<double>::infinity();
            nll += std::log(sigma) + (1.0 + 1.0 / xi) * std::log(t) + std::pow(t, -1.0 / xi);
        }
    }
    return std::isfinite(nll) ? nll : std::numeric_limits<double>::infinity();
}

/// Minimal Nelder-Mead on R^n.
inline std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x0, int max_iter, double tol, bool& converged) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> sim(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) sim[i + 1][i] += (x0[i] != 0.0 ? 0.05 * std::abs(x0[i]) : 0.05);
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fv[i] = f(sim[i]);

    converged = false;
    for (int it = 0; it < max_iter; ++it) {
        std::vector<std::size_t> ord(n + 1);
        std::iota(ord.begin(), ord.end(), std::size_t{0});
        std::sort(ord.begin(), ord.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        std::vector<std::vector<double>> s2(n + 1);
        std::vector<double> f2(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            s2[i] = sim[ord[i]];
            f2[i] = fv[ord[i]];
        }
        sim.swap(s2);
        fv.swap(f2);
        if (std::abs(fv[n] - fv[0]) < tol * (std::abs(fv[0]) + tol)) {
            converged = std::isfinite(fv[0]);
            break;
        }
        std::vector<double> cen(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) cen[j] += sim[i][j] / static_cast<double>(n);
        auto blend = [&](double c) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j) p[j] = cen[j] + c * (sim[n][j] - cen[j]);
            return p;
        };
        std::vector<double> xr = blend(-1.0);
        const double fr = f(xr);
        if (fr < fv[0]) {
            std::vector<double> xe = blend(-2.0);
            const double fe = f(xe);
            if (fe < fr) {
                sim[n] = xe;
                fv[n] = fe;
            } else {
                sim[n] = xr;
                fv[n] = fr;
            }
        } else if (fr < fv[n - 1]) {
            sim[n] = xr;
            fv[n] = fr;
        } else {
            std::vector<double> xc = blend(fr < fv[n] ? -0.5 : 0.5);
            const double fc = f(xc);
            if (fc < std::min(fr, fv[n])) {
                sim[n] = xc;
                fv[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j) sim[i][j] = sim[0][j] + 0.5 * (sim[i][j] - sim[0][j]);
                    fv[i] = f(sim[i]);
                }
            }
        }
    }
    return sim[0];
}

} // namespace detail

/// Maximum-likelihood GEV fit to block maxima, started from Gumbel moments.
inline GevFit gev_fit_mle(const std::vector<double>& maxima) {
    GevFit fit;
    const double m = stats::mean(maxima);
    const double sd = std::sqrt(std::max(stats::variance(maxima), 1e-24));
    const double sigma0 = sd * std::sqrt(6.0) / M_PI;
    const double mu0 = m - 0.5772156649015329 * sigma0;
    auto obj = [&](const std::vector<double>& p) {
        return detail::gev_nll(maxima, p[0], std::exp(p[1]), p[2]);
    };
    bool conv = false;
    std::vector<double> best = detail::nelder_mead(obj, {mu0, std::log(sigma0), 0.0}, 800, 1e-12, conv);
    fit.mu = best[0];
    fit.sigma = std::exp(best[1]);
    fit.xi = best[2];
    fit.nll = obj(best);
    fit.converged = conv && std::isfinite(fit.nll);
    return fit;
}

/// GEV quantile at probability p.
inline double gev_quantile(const GevFit& fit, double p) {
    if (!(p > 0 && p < 1)) throw std::invalid_argument("gev_quantile: p must be in (0,1)");
    if (std::abs(fit.xi) < 1e-8) return fit.mu - fit.sigma * std::log(-std::log(p));
    return fit.mu + fit.sigma * (std::pow(-std::log(p), -fit.xi) - 1.0) / fit.xi;
}

struct GevBoxplotResult {
    std::vector<std::uint8_t> keep;  // 0 = remove
    std::size_t removed = 0;
    std::size_t gev_flagged = 0;
    std::size_t box_flagged = 0;
    bool gev_converged = true;
    bool fallback_boxplot_only = false;
    double gev_threshold = std::numeric_limits<double>::infinity();
    double box_lo = 0, box_hi = 0;
};

/// Tail filter: GEV fitted to block maxima flags values above its (1-alpha)
/// quantile; the boxplot IQR rule verifies independently. A value is removed
/// only when both agree (boxplot-only if the MLE fails to converge).
inline GevBoxplotResult gev_boxplot_filter(const std::vector<double>& x, double alpha,
                                           std::size_t block_size = 24) {
    if (x.size() < 30)
        throw std::invalid_argument("gev_boxplot_filter: need at least 30 samples, got " +
                                    std::to_string(x.size()));
    if (block_size < 2) throw std::invalid_argument("gev_boxplot_filter: block size must be >= 2");
    GevBoxplotResult res;
    res.keep.assign(x.size(), 1);

    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    const double q1 = stats::quantile_sorted(sorted, 0.25);
    const double q3 = stats::quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    res.box_lo = q1 - 1.5 * iqr;
    res.box_hi = q3 + 1.5 * iqr;

    if (std::sqrt(stats::variance(x)) < 1e-12) return res; // constant channel: flag nothing

    std::vector<double> maxima;
    for (std::size_t i = 0; i < x.size(); i += block_size) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = i; j < std::min(i + block_size, x.size()); ++j) mx = std::max(mx, x[j]);
        maxima.push_back(mx);
    }

    GevFit fit = gev_fit_mle(maxima);
    res.gev_converged = fit.converged;
    if (fit.converged) {
        res.gev_threshold = gev_quantile(fit, 1.0 - alpha);
    } else {
        res.fallback_boxplot_only = true;
    }

    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool gev_flag = res.fallback_boxplot_only ? true : (x[i] > res.gev_threshold);
        const bool box_flag = (x[i] < res.box_lo) || (x[i] > res.box_hi);
        if (gev_flag && !res.fallback_boxplot_only) ++res.gev_flagged;
        if (box_flag) ++res.box_flagged;
        if (gev_flag && box_flag) {
            res.keep[i] = 0;
            ++res.removed;
        }
    }
    return res;
}

} // namespace data
} // namespace ddt

#endif
