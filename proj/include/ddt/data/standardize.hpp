#ifndef DDT_DATA_STANDARDIZE_HPP
#define DDT_DATA_STANDARDIZE_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ddt/data/stats.hpp"
#include "ddt/tensor.hpp"

namespace ddt {
namespace data {

struct ZscoreStats {
    std::vector<double> mean, stddev;   // per channel
    std::vector<std::uint8_t> constant; // channels passed through unchanged
};

/// Fit per-channel mean / population std on rows [0, fit_len) of a B x L x N
/// tensor. Channels with zero spread are flagged constant.
inline ZscoreStats zscore_fit(const Tensor& x, std::size_t fit_len = 0) {
    if (x.rank() != 3) throw ShapeError("zscore_fit: expected B x L x N, got " + shape_str(x.shape()));
    const std::size_t B = x.dim(0), L = x.dim(1), N = x.dim(2);
    const std::size_t len = fit_len == 0 ? L : std::min(fit_len, L);
    ZscoreStats st;
    st.mean.assign(N, 0.0);
    st.stddev.assign(N, 1.0);
    st.constant.assign(N, 0);
    for (std::size_t n = 0; n < N; ++n) {
        double m = 0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < len; ++t) m += x.at3(b, t, n);
        m /= static_cast<double>(B * len);
        double v = 0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t t = 0; t < len; ++t) {
                const double d = x.at3(b, t, n) - m;
                v += d * d;
            }
        v /= static_cast<double>(B * len);
        st.mean[n] = m;
        if (v < 1e-24) {
            st.constant[n] = 1;
            st.stddev[n] = 1.0;
        } else {
            st.stddev[n] = std::sqrt(v);
        }
    }
    return st;
}

inline Tensor zscore_apply(const Tensor& x, const ZscoreStats& st) {
    const std::size_t N = x.dim(x.rank() - 1);
    if (st.mean.size() != N)
        throw ShapeError("zscore_apply: stats for " + std::to_string(st.mean.size()) + " channels vs tensor " +
                         shape_str(x.shape()));
    Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const std::size_t n = i % N;
        if (st.constant[n]) continue;
        y[i] = (y[i] - st.mean[n]) / st.stddev[n];
    }
    return y;
}

inline Tensor zscore_invert(const Tensor& x, const ZscoreStats& st) {
    const std::size_t N = x.dim(x.rank() - 1);
    Tensor y = x;
    for (std::size_t i = 0; i < y.numel(); ++i) {
        const std::size_t n = i % N;
        if (st.constant[n]) continue;
        y[i] = y[i] * st.stddev[n] + st.mean[n];
    }
    return y;
}

struct W1Result {
    double distance = 0;
    bool pass = true;
};

/// 1-D Wasserstein-1 distance between the sample and N(0,1), via order
/// statistics against the normal quantile grid Phi^{-1}((i-0.5)/n).
inline W1Result wasserstein_check(std::vector<double> sample, double threshold = 0.2) {
    if (sample.size() < 100)
        throw std::invalid_argument("wasserstein_check: need at least 100 samples, got " +
                                    std::to_string(sample.size()));
    std::sort(sample.begin(), sample.end());
    const std::size_t n = sample.size();
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i)
        acc += std::abs(sample[i] - stats::norm_ppf((static_cast<double>(i) + 0.5) / static_cast<double>(n)));
    W1Result r;
    r.distance = acc / static_cast<double>(n);
    r.pass = r.distance <= threshold;
    return r;
}

} // namespace data
} // namespace ddt

#endif
