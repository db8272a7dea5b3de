#ifndef DDT_DATA_SPLIT_HPP
#define DDT_DATA_SPLIT_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ddt/rng.hpp"
#include "ddt/tensor.hpp"

namespace ddt {
namespace data {

/// Forecasting window geometry: L input steps followed by H label steps.
struct LabelWindow {
    std::size_t input_len = 96;
    std::size_t horizon = 24;
    std::size_t stride = 1;
};

inline bool horizon_supported(std::size_t h) {
    for (std::size_t s : {24u, 36u, 48u, 60u, 96u, 192u, 336u, 720u})
        if (h == s) return true;
    return false;
}

/// Start indices of all windows fitting a series of length `total_len`.
inline std::vector<std::size_t> window_starts(std::size_t total_len, const LabelWindow& w) {
    std::vector<std::size_t> starts;
    if (w.stride == 0) throw std::invalid_argument("window_starts: stride must be positive");
    const std::size_t need = w.input_len + w.horizon;
    if (total_len < need) return starts;
    for (std::size_t s = 0; s + need <= total_len; s += w.stride) starts.push_back(s);
    return starts;
}

struct SplitSpec {
    double train = 0.70, val = 0.15, test = 0.15;
    std::size_t cluster_count = 1;
    std::uint64_t seed = 0;

    void validate() const {
        if (std::abs(train + val + test - 1.0) > 1e-9)
            throw std::invalid_argument("SplitSpec: ratios must sum to 1");
        if (cluster_count < 1) throw std::invalid_argument("SplitSpec: cluster_count must be >= 1");
    }
};

struct SubsetStats {
    double mean_dev = 0; // L2 distance of subset mean from the global mean
    double var_dev = 0;  // L2 distance of per-dim variances from the global ones
};

struct SplitResult {
    std::vector<std::size_t> train, val, test;   // window indices
    std::vector<std::size_t> cluster_of;         // per window
    std::size_t reseeded = 0;
    std::size_t merged_clusters = 0;
    SubsetStats train_stats, val_stats, test_stats;
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

struct KmeansOut {
    std::vector<std::size_t> assign;
    std::size_t empty_after = 0;
};

/// Lloyd's algorithm with k-means++ seeding; deterministic given the stream.
inline KmeansOut kmeans(const Tensor& rows, std::size_t k, RngStream& rng, int max_iter = 50) {
    const std::size_t m = rows.dim(0), d = rows.dim(1);
    std::vector<double> centers(k * d);
    // k-means++ seeding
    std::size_t first = rng.index(m);
    std::copy(rows.data() + first * d, rows.data() + (first + 1) * d, centers.begin());
    std::vector<double> mind(m, std::numeric_limits<double>::infinity());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double dd = sq_dist(rows.data() + i * d, centers.data() + (c - 1) * d, d);
            mind[i] = std::min(mind[i], dd);
            total += mind[i];
        }
        double r = rng.uniform() * total;
        std::size_t pick = m - 1;
        double acc = 0;
        for (std::size_t i = 0; i < m; ++i) {
            acc += mind[i];
            if (acc >= r) {
                pick = i;
                break;
            }
        }
        std::copy(rows.data() + pick * d, rows.data() + (pick + 1) * d, centers.data() + c * d);
    }

    KmeansOut out;
    out.assign.assign(m, 0);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double dd = sq_dist(rows.data() + i * d, centers.data() + c * d, d);
                if (dd < bd) {
                    bd = dd;
                    best = c;
                }
            }
            if (out.assign[i] != best) {
                out.assign[i] = best;
                changed = true;
            }
        }
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < m; ++i) {
            ++counts[out.assign[i]];
            for (std::size_t j = 0; j < d; ++j) sums[out.assign[i] * d + j] += rows[i * d + j];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c])
                for (std::size_t j = 0; j < d; ++j)
                    centers[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
        if (!changed) break;
    }
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : out.assign) ++counts[a];
    for (std::size_t c = 0; c < k; ++c)
        if (counts[c] == 0) ++out.empty_after;
    return out;
}

inline SubsetStats subset_stats(const Tensor& rows, const std::vector<std::size_t>& idx,
                                const std::vector<double>& gmean, const std::vector<double>& gvar) {
    SubsetStats st;
    if (idx.empty()) return st;
    const std::size_t d = rows.dim(1);
    std::vector<double> m(d, 0.0), v(d, 0.0);
    for (std::size_t i : idx)
        for (std::size_t j = 0; j < d; ++j) m[j] += rows[i * d + j];
    for (auto& x : m) x /= static_cast<double>(idx.size());
    for (std::size_t i : idx)
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = rows[i * d + j] - m[j];
            v[j] += diff * diff;
        }
    for (auto& x : v) x /= static_cast<double>(idx.size());
    double md = 0, vd = 0;
    for (std::size_t j = 0; j < d; ++j) {
        md += (m[j] - gmean[j]) * (m[j] - gmean[j]);
        vd += (v[j] - gvar[j]) * (v[j] - gvar[j]);
    }
    st.mean_dev = std::sqrt(md);
    st.var_dev = std::sqrt(vd);
    return st;
}

} // namespace detail

/// Cluster windows with k-means, then split each cluster 70/15/15 in
/// chronological order (earliest windows feed the train set) so overlapping
/// windows never leak future data into training.
inline SplitResult stratified_split(const Tensor& windows /* M x d flattened */, const SplitSpec& spec) {
    spec.validate();
    if (windows.rank() != 2)
        throw ShapeError("stratified_split: expected M x d windows, got " + shape_str(windows.shape()));
    const std::size_t m = windows.dim(0);
    if (m < spec.cluster_count * 10)
        throw std::invalid_argument("stratified_split: need at least cluster_count*10 windows, got " +
                                    std::to_string(m));

    SplitResult res;
    RngStream rng(spec.seed);
    detail::KmeansOut km = detail::kmeans(windows, spec.cluster_count, rng);
    if (km.empty_after > 0) {
        // one re-seed attempt, then keep whatever it gives (empty clusters
        // simply receive no windows and are effectively merged away)
        ++res.reseeded;
        detail::KmeansOut km2 = detail::kmeans(windows, spec.cluster_count, rng);
        if (km2.empty_after < km.empty_after) km = std::move(km2);
        res.merged_clusters = km.empty_after;
    }
    res.cluster_of = km.assign;

    for (std::size_t c = 0; c < spec.cluster_count; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < m; ++i)
            if (km.assign[i] == c) members.push_back(i);
        if (members.empty()) continue;
        std::sort(members.begin(), members.end()); // chronological by window index
        const std::size_t n = members.size();
        const std::size_t n_tr = static_cast<std::size_t>(std::floor(spec.train * n + 1e-9));
        const std::size_t n_tv = static_cast<std::size_t>(std::floor((spec.train + spec.val) * n + 1e-9));
        for (std::size_t i = 0; i < n; ++i) {
            if (i < n_tr)
                res.train.push_back(members[i]);
            else if (i < n_tv)
                res.val.push_back(members[i]);
            else
                res.test.push_back(members[i]);
        }
    }
    std::sort(res.train.begin(), res.train.end());
    std::sort(res.val.begin(), res.val.end());
    std::sort(res.test.begin(), res.test.end());

    const std::size_t d = windows.dim(1);
    std::vector<double> gmean(d, 0.0), gvar(d, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) gmean[j] += windows[i * d + j];
    for (auto& x : gmean) x /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = windows[i * d + j] - gmean[j];
            gvar[j] += diff * diff;
        }
    for (auto& x : gvar) x /= static_cast<double>(m);
    res.train_stats = detail::subset_stats(windows, res.train, gmean, gvar);
    res.val_stats = detail::subset_stats(windows, res.val, gmean, gvar);
    res.test_stats = detail::subset_stats(windows, res.test, gmean, gvar);
    return res;
}

} // namespace data
} // namespace ddt

#endif
