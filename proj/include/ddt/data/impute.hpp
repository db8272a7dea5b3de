#ifndef DDT_DATA_IMPUTE_HPP
#define DDT_DATA_IMPUTE_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ddt/data/stats.hpp"
#include "ddt/linalg.hpp"

namespace ddt {
namespace data {

struct GpImputeResult {
    std::vector<double> filled;    // full series with gaps replaced by the posterior mean
    std::vector<double> variance;  // posterior variance at gap positions, 0 at observed ones
    std::size_t gaps_filled = 0;
};

namespace detail {

/// Dense GP posterior over the given observed subset (indices as inputs).
struct GpSolver {
    std::vector<double> t_obs, y_obs;
    std::vector<double> chol;   // Cholesky factor of K + noise I
    std::vector<double> alpha;  // (K + noise I)^{-1} (y - m)
    double prior_mean = 0, signal_var = 1, lengthscale = 1, noise_var = 0;

    void fit(std::vector<double> t, std::vector<double> y, double ls, double nv) {
        t_obs = std::move(t);
        y_obs = std::move(y);
        lengthscale = ls;
        noise_var = nv;
        prior_mean = stats::mean(y_obs);
        signal_var = std::max(stats::variance(y_obs), 1e-12);
        const std::size_t n = t_obs.size();
        std::vector<double> K(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) K[i * n + j] = kern(t_obs[i], t_obs[j]);
        for (std::size_t i = 0; i < n; ++i) K[i * n + i] += noise_var;
        chol = K;
        if (!la::cholesky(chol, n)) {
            // singular kernel: jitter once, then give up
            chol = K;
            for (std::size_t i = 0; i < n; ++i) chol[i * n + i] += 1e-8;
            if (!la::cholesky(chol, n))
                throw std::runtime_error("impute_gp: kernel matrix singular even after jitter");
        }
        alpha.resize(n);
        for (std::size_t i = 0; i < n; ++i) alpha[i] = y_obs[i] - prior_mean;
        la::cholesky_solve(chol, n, alpha);
    }

    double kern(double a, double b) const {
        const double d = (a - b) / lengthscale;
        return signal_var * std::exp(-0.5 * d * d);
    }

    void predict(double t, double& mean, double& var) const {
        const std::size_t n = t_obs.size();
        std::vector<double> ks(n);
        for (std::size_t i = 0; i < n; ++i) ks[i] = kern(t, t_obs[i]);
        double m = prior_mean;
        for (std::size_t i = 0; i < n; ++i) m += ks[i] * alpha[i];
        std::vector<double> v = ks;
        la::cholesky_solve(chol, n, v);
        double quad = 0;
        for (std::size_t i = 0; i < n; ++i) quad += ks[i] * v[i];
        mean = m;
        var = std::max(signal_var - quad, 0.0);
    }
};

} // namespace detail

/// Gaussian-process imputation with an RBF kernel over sample indices.
/// Gaps take the posterior mean; the posterior variance quantifies the
/// uncertainty of each fill. Series longer than `dense_limit` observed
/// points use a local window of the nearest observations per gap.
inline GpImputeResult impute_gp(const std::vector<double>& y, const std::vector<std::uint8_t>& missing,
                                double kernel_lengthscale, double noise_var,
                                std::size_t dense_limit = 512, std::size_t window = 64) {
    if (y.size() != missing.size())
        throw std::invalid_argument("impute_gp: series and mask lengths differ");
    std::vector<double> t_obs, y_obs;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (!missing[i]) {
            t_obs.push_back(static_cast<double>(i));
            y_obs.push_back(y[i]);
        }
    if (t_obs.size() < 2)
        throw std::invalid_argument("impute_gp: need at least 2 observed points per channel");

    GpImputeResult res;
    res.filled = y;
    res.variance.assign(y.size(), 0.0);

    const bool dense = t_obs.size() <= dense_limit;
    detail::GpSolver global;
    if (dense) global.fit(t_obs, y_obs, kernel_lengthscale, noise_var);

    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!missing[i]) continue;
        double mean, var;
        if (dense) {
            global.predict(static_cast<double>(i), mean, var);
        } else {
            // nearest `window` observed points around the gap
            auto it = std::lower_bound(t_obs.begin(), t_obs.end(), static_cast<double>(i));
            std::size_t hi = static_cast<std::size_t>(it - t_obs.begin());
            std::size_t lo = hi;
            while (hi - lo < window && (lo > 0 || hi < t_obs.size())) {
                if (lo == 0) {
                    ++hi;
                } else if (hi == t_obs.size()) {
                    --lo;
                } else {
                    const double dl = static_cast<double>(i) - t_obs[lo - 1];
                    const double dh = t_obs[hi] - static_cast<double>(i);
                    if (dl <= dh)
                        --lo;
                    else
                        ++hi;
                }
            }
            detail::GpSolver local;
            local.fit(std::vector<double>(t_obs.begin() + lo, t_obs.begin() + hi),
                      std::vector<double>(y_obs.begin() + lo, y_obs.begin() + hi), kernel_lengthscale,
                      noise_var);
            local.predict(static_cast<double>(i), mean, var);
        }
        res.filled[i] = mean;
        res.variance[i] = var;
        ++res.gaps_filled;
    }
    return res;
}

} // namespace data
} // namespace ddt

#endif
