#ifndef DDT_FFT_HPP
#define DDT_FFT_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "ddt/tensor.hpp"

namespace ddt {

using cdouble = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 Cooley-Tukey, unscaled.
inline void fft_radix2(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
        const cdouble wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cdouble w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cdouble u = a[i + k];
                cdouble v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

/// Bluestein chirp-z transform for arbitrary length, unscaled DFT.
inline void fft_bluestein(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    std::size_t m = 1;
    while (m < 2 * n + 1) m <<= 1;

    const double sign = inverse ? 1.0 : -1.0;
    std::vector<cdouble> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        // chirp exp(sign*i*pi*k^2/n); reduce k^2 mod 2n to keep the angle small
        const std::size_t k2 = static_cast<std::size_t>((static_cast<unsigned long long>(k) * k) % (2 * n));
        const double ang = sign * M_PI * static_cast<double>(k2) / static_cast<double>(n);
        w[k] = cdouble(std::cos(ang), std::sin(ang));
    }

    std::vector<cdouble> x(m, cdouble(0, 0)), y(m, cdouble(0, 0));
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * w[k];
    for (std::size_t k = 0; k < n; ++k) {
        y[k] = std::conj(w[k]);
        if (k) y[m - k] = std::conj(w[k]);
    }
    fft_radix2(x, false);
    fft_radix2(y, false);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_radix2(x, true);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * w[k];
}

inline void fft_inplace(std::vector<cdouble>& a, bool inverse) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size()))
        fft_radix2(a, inverse);
    else
        fft_bluestein(a, inverse);
}

} // namespace detail

/// Unitary DFT of a real series: X_k = (1/sqrt(T)) * sum_t x_t e^{-i 2pi k t / T}.
inline std::vector<cdouble> fft_1d(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n == 0) throw ShapeError("fft_1d: empty input");
    std::vector<cdouble> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = cdouble(x[i], 0.0);
    detail::fft_inplace(a, false);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : a) v *= s;
    return a;
}

/// Unitary inverse; ifft_1d(fft_1d(x)) reconstructs x.
inline std::vector<cdouble> ifft_1d(const std::vector<cdouble>& spectrum) {
    std::vector<cdouble> a = spectrum;
    if (a.empty()) throw ShapeError("ifft_1d: empty input");
    detail::fft_inplace(a, true);
    const double s = 1.0 / std::sqrt(static_cast<double>(a.size()));
    for (auto& v : a) v *= s;
    return a;
}

} // namespace ddt

#endif
