#ifndef DDT_RNG_HPP
#define DDT_RNG_HPP

#include <cmath>
#include <cstdint>

#include "ddt/tensor.hpp"

namespace ddt {

/// Counter-based deterministic random stream. Each draw is a pure function
/// of (seed, counter), so identical state reproduces identical sequences on
/// any platform, and streams can be split by offsetting the counter.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
        : seed_(mix(seed ^ 0x6a09e667f3bcc908ULL)), counter_(counter) {}

    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    /// Derive an independent stream (e.g. one per batch element).
    RngStream split(std::uint64_t stream_id) const {
        RngStream s(0);
        s.seed_ = mix(seed_ ^ mix(stream_id + 0x9e3779b97f4a7c15ULL));
        s.counter_ = 0;
        return s;
    }

    std::uint64_t next_u64() { return mix(seed_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform on (0,1), both endpoints excluded.
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (two uniforms per draw, no caching,
    /// so the stream state is exactly the counter).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gumbel() { return gumbel_from_uniform(uniform()); }

    /// g = -log(-log(u)) for u in (0,1).
    static double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    Tensor uniform_tensor(Shape shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
        return t;
    }

    Tensor normal_tensor(Shape shape, double stddev = 1.0, double mean = 0.0) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = mean + stddev * normal();
        return t;
    }

    Tensor gumbel_tensor(Shape shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = gumbel();
        return t;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

/// Gumbel(0,1) draws with the given shape; deterministic per (seed, counter).
inline Tensor gumbel_draw(RngStream& rng, Shape shape) { return rng.gumbel_tensor(std::move(shape)); }

} // namespace ddt

#endif
