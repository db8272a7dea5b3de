#ifndef DDT_DATA_AUGMENT_HPP
#define DDT_DATA_AUGMENT_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "ddt/rng.hpp"
#include "ddt/tensor.hpp"

namespace ddt {
namespace data {

// ---------------------------------------------------------------------------
// Dynamic time warping
// ---------------------------------------------------------------------------

/// DTW distance with |a_i - b_j| local cost and an optional Sakoe-Chiba band.
inline double dtw_distance(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t band = static_cast<std::size_t>(-1)) {
    if (a.empty() || b.empty()) throw std::invalid_argument("dtw_distance: empty series");
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        std::fill(cur.begin(), cur.end(), inf);
        const std::size_t jlo = band >= i ? 1 : i - band;
        const std::size_t jhi = std::min(m, i + band < i ? m : i + band);
        for (std::size_t j = jlo; j <= jhi; ++j) {
            const double cost = std::abs(a[i - 1] - b[j - 1]);
            cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        prev.swap(cur);
    }
    return prev[m];
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct AugmentSpec {
    bool dtw_warp = false;
    bool log_scale = false;
    bool snr_noise = false;
    double max_stretch = 1.2;  // max local warp stretch
    double scale_s = 1.1;      // log-space scale bound, factor in [1/s, s]
    double offset_frac = 0.02; // additive offset bound as a fraction of channel std
    double snr_db = 20.0;      // signal-to-noise ratio of injected noise
};

/// Noise variance for a target SNR in dB: var = power / 10^(SNR/10).
inline double snr_noise_variance(double signal_power, double snr_db) {
    return signal_power / std::pow(10.0, snr_db / 10.0);
}

/// Resample a series (L x N) along an explicit monotone warp path mapping
/// output position i to source position path[i] in [0, L-1].
inline Tensor warp_resample(const Tensor& x, const std::vector<double>& path) {
    if (x.rank() != 2) throw ShapeError("warp_resample: expected L x N, got " + shape_str(x.shape()));
    const std::size_t L = x.dim(0), N = x.dim(1);
    if (path.size() != L) throw std::invalid_argument("warp_resample: path length must equal series length");
    Tensor y({L, N});
    for (std::size_t i = 0; i < L; ++i) {
        const double p = std::clamp(path[i], 0.0, static_cast<double>(L - 1));
        const std::size_t lo = static_cast<std::size_t>(std::floor(p));
        const std::size_t hi = std::min(lo + 1, L - 1);
        const double f = p - static_cast<double>(lo);
        for (std::size_t n = 0; n < N; ++n)
            y.at2(i, n) = (1.0 - f) * x.at2(lo, n) + f * x.at2(hi, n);
    }
    return y;
}

/// Smooth monotone warp path with local stretch bounded by `max_stretch`,
/// normalized to span [0, L-1].
inline std::vector<double> random_warp_path(std::size_t L, double max_stretch, RngStream& rng) {
    if (L < 2) return std::vector<double>(L, 0.0);
    std::vector<double> inc(L - 1);
    for (auto& v : inc) v = rng.uniform(1.0 / max_stretch, max_stretch);
    // moving-average smoothing keeps the warp gentle
    std::vector<double> sm(L - 1);
    const int w = 2;
    for (std::size_t i = 0; i < inc.size(); ++i) {
        double s = 0;
        int c = 0;
        for (int j = -w; j <= w; ++j) {
            const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(i) + j;
            if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(inc.size())) continue;
            s += inc[static_cast<std::size_t>(idx)];
            ++c;
        }
        sm[i] = s / c;
    }
    std::vector<double> path(L, 0.0);
    for (std::size_t i = 1; i < L; ++i) path[i] = path[i - 1] + sm[i - 1];
    const double scale = static_cast<double>(L - 1) / path.back();
    for (auto& v : path) v *= scale;
    return path;
}

/// One augmented copy of a series (L x N) per the selected transforms.
inline Tensor augment(const Tensor& x, const AugmentSpec& spec, RngStream& rng) {
    if (x.rank() != 2) throw ShapeError("augment: expected L x N, got " + shape_str(x.shape()));
    const std::size_t L = x.dim(0), N = x.dim(1);
    Tensor y = x;
    if (spec.dtw_warp) y = warp_resample(y, random_warp_path(L, spec.max_stretch, rng));
    if (spec.log_scale) {
        for (std::size_t n = 0; n < N; ++n) {
            double m = 0, v = 0;
            for (std::size_t t = 0; t < L; ++t) m += y.at2(t, n);
            m /= static_cast<double>(L);
            for (std::size_t t = 0; t < L; ++t) v += (y.at2(t, n) - m) * (y.at2(t, n) - m);
            const double sd = std::sqrt(v / static_cast<double>(L));
            const double factor = std::exp(rng.uniform(-std::log(spec.scale_s), std::log(spec.scale_s)));
            const double offset = rng.uniform(-spec.offset_frac * sd, spec.offset_frac * sd);
            for (std::size_t t = 0; t < L; ++t) y.at2(t, n) = y.at2(t, n) * factor + offset;
        }
    }
    if (spec.snr_noise) {
        for (std::size_t n = 0; n < N; ++n) {
            double power = 0;
            for (std::size_t t = 0; t < L; ++t) power += y.at2(t, n) * y.at2(t, n);
            power /= static_cast<double>(L);
            const double noise_sd = std::sqrt(snr_noise_variance(power, spec.snr_db));
            for (std::size_t t = 0; t < L; ++t) y.at2(t, n) += noise_sd * rng.normal();
        }
    }
    return y;
}

} // namespace data
} // namespace ddt

#endif
