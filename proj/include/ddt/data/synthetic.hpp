#ifndef DDT_DATA_SYNTHETIC_HPP
#define DDT_DATA_SYNTHETIC_HPP

#include <cmath>
#include <vector>

#include "ddt/data/csv.hpp"
#include "ddt/rng.hpp"

namespace ddt {
namespace data {

/// Self-contained synthetic benchmark: per-channel AR(2) over shared daily
/// and weekly seasonal drivers, lagged cross-channel coupling, and
/// heteroscedastic noise arriving in bursts. Bursty segments reward masks
/// that focus on clean, phase-aligned history.
struct SyntheticSpec {
    std::size_t length = 2000;
    std::size_t channels = 4;
    std::uint64_t seed = 1;
    double ar1 = 0.55;
    double ar2 = -0.2;
    double daily_amp = 1.2;
    double weekly_amp = 0.4;
    double coupling = 0.7;       // strength of channel n-1 -> n
    std::size_t coupling_lag = 2;
    double noise_base = 0.08;
    double noise_burst = 0.9;    // burst-segment noise level
    double burst_prob = 0.015;   // per-step chance a burst starts
    std::size_t burst_len = 20;
    std::int64_t step_seconds = 3600;
    std::int64_t t0 = 1600000000; // arbitrary epoch origin
};

inline double synthetic_seasonal(const SyntheticSpec& spec, double amp, double phase, std::size_t t) {
    const double hour = static_cast<double>(t % 24);
    const double day = static_cast<double>((t / 24) % 7);
    return amp * std::sin(2.0 * M_PI * hour / 24.0 + phase) +
           spec.weekly_amp * std::sin(2.0 * M_PI * day / 7.0 + 0.5 * phase);
}

inline SeriesBatch synthesize(const SyntheticSpec& spec) {
    RngStream rng(spec.seed);
    const std::size_t T = spec.length, N = spec.channels;
    std::vector<std::vector<double>> x(N, std::vector<double>(T, 0.0));
    std::vector<double> phase(N), amp(N);
    for (std::size_t n = 0; n < N; ++n) {
        phase[n] = rng.uniform(0.0, 2.0 * M_PI);
        amp[n] = spec.daily_amp * rng.uniform(0.7, 1.3);
    }
    std::size_t burst_left = 0;
    for (std::size_t t = 0; t < T; ++t) {
        if (burst_left == 0 && rng.uniform() < spec.burst_prob) burst_left = spec.burst_len;
        const double noise_sd = burst_left > 0 ? spec.noise_burst : spec.noise_base;
        if (burst_left > 0) --burst_left;
        for (std::size_t n = 0; n < N; ++n) {
            double v = synthetic_seasonal(spec, amp[n], phase[n], t);
            if (t >= 1) v += spec.ar1 * (x[n][t - 1] - synthetic_seasonal(spec, amp[n], phase[n], t - 1));
            if (t >= 2) v += spec.ar2 * (x[n][t - 2] - synthetic_seasonal(spec, amp[n], phase[n], t - 2));
            if (n > 0 && t >= spec.coupling_lag) v += spec.coupling * 0.5 * x[n - 1][t - spec.coupling_lag];
            v += noise_sd * rng.normal();
            x[n][t] = v;
        }
    }

    SeriesBatch sb;
    sb.values = Tensor({1, T, N});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n) sb.values.at3(0, t, n) = x[n][t];
    sb.timestamps.resize(T);
    for (std::size_t t = 0; t < T; ++t)
        sb.timestamps[t] = spec.t0 + static_cast<std::int64_t>(t) * spec.step_seconds;
    sb.channel_names.resize(N);
    sb.roles.assign(N, ChannelRole::target);
    for (std::size_t n = 0; n < N; ++n) sb.channel_names[n] = "ch" + std::to_string(n);
    sb.missing.assign(T * N, 0);
    return sb;
}

struct SpikeRecord {
    std::size_t t, channel;
    double original;
};

/// Inject isolated spikes of +-magnitude * channel std; returns ground truth
/// for recall/false-positive accounting in the anomaly fixture.
inline std::vector<SpikeRecord> inject_spikes(SeriesBatch& sb, std::size_t count, double magnitude,
                                              RngStream& rng) {
    const std::size_t T = sb.length(), N = sb.channels();
    std::vector<double> sd(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        double m = 0;
        for (std::size_t t = 0; t < T; ++t) m += sb.values.at3(0, t, n);
        m /= static_cast<double>(T);
        double v = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = sb.values.at3(0, t, n) - m;
            v += d * d;
        }
        sd[n] = std::sqrt(v / static_cast<double>(T));
    }
    std::vector<SpikeRecord> spikes;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t t = 1 + rng.index(T - 2);
        const std::size_t n = rng.index(N);
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        spikes.push_back({t, n, sb.values.at3(0, t, n)});
        sb.values.at3(0, t, n) += sign * magnitude * sd[n];
    }
    return spikes;
}

} // namespace data
} // namespace ddt

#endif
