#ifndef DDT_LINALG_HPP
#define DDT_LINALG_HPP

#include <cmath>
#include <cstddef>
#include <vector>

namespace ddt {
namespace la {

/// In-place lower Cholesky of a row-major SPD matrix. Returns false if a
/// non-positive pivot is met.
inline bool cholesky(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double lj = std::sqrt(d);
        a[j * n + j] = lj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / lj;
        }
    }
    // zero the upper triangle for cleanliness
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
    return true;
}

/// Solve A x = b given the lower Cholesky factor of A; b is overwritten.
inline void cholesky_solve(const std::vector<double>& l, std::size_t n, std::vector<double>& b) {
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * b[k];
        b[i] = s / l[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * b[k];
        b[i] = s / l[i * n + i];
    }
}

/// Solve the SPD system with optional ridge added to the diagonal.
/// Returns false if factorization fails even after the ridge.
inline bool solve_spd(std::vector<double> a, std::size_t n, std::vector<double>& b, double ridge = 0.0) {
    if (ridge != 0.0)
        for (std::size_t i = 0; i < n; ++i) a[i * n + i] += ridge;
    if (!cholesky(a, n)) return false;
    cholesky_solve(a, n, b);
    return true;
}

} // namespace la
} // namespace ddt

#endif
