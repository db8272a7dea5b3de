#ifndef DDT_DATA_PIPELINE_HPP
#define DDT_DATA_PIPELINE_HPP

#include <string>
#include <vector>

#include "ddt/data/csv.hpp"
#include "ddt/data/impute.hpp"
#include "ddt/data/outliers.hpp"
#include "ddt/data/standardize.hpp"

namespace ddt {
namespace data {

struct CleaningConfig {
    bool outlier_stage = true;
    std::size_t lof_k = 20;
    double lof_threshold = 1.5;
    double gev_alpha = 0.01;
    std::size_t gev_block = 24;
    double gp_lengthscale = 6.0;
    double gp_noise = 1e-2;
};

struct ChannelCleaningReport {
    std::string name;
    std::size_t lof_flagged = 0;
    std::size_t gev_box_removed = 0;
    std::size_t gaps_imputed = 0;
    double max_impute_variance = 0;
    bool gev_fallback = false;
};

struct CleaningReport {
    std::vector<ChannelCleaningReport> channels;
    std::vector<std::string> warnings;

    std::size_t total_outliers() const {
        std::size_t n = 0;
        for (const auto& c : channels) n += c.lof_flagged + c.gev_box_removed;
        return n;
    }
    std::size_t total_imputed() const {
        std::size_t n = 0;
        for (const auto& c : channels) n += c.gaps_imputed;
        return n;
    }
};

/// Noise/outlier handling and imputation, per channel: LOF-flagged points
/// and GEV-and-boxplot tail outliers become missing sentinels, then the
/// Gaussian-process posterior fills every gap. The returned series carries
/// no sentinels.
inline CleaningReport clean_series(SeriesBatch& sb, const CleaningConfig& cfg) {
    CleaningReport report;
    const std::size_t T = sb.length(), N = sb.channels();
    for (std::size_t n = 0; n < N; ++n) {
        ChannelCleaningReport ch;
        ch.name = sb.channel_names[n];

        if (cfg.outlier_stage) {
            // LOF over observed per-timestep values
            std::vector<double> vals;
            std::vector<std::size_t> pos;
            for (std::size_t t = 0; t < T; ++t)
                if (!sb.is_missing(0, t, n)) {
                    vals.push_back(sb.values.at3(0, t, n));
                    pos.push_back(t);
                }
            if (vals.size() > cfg.lof_k + 1) {
                Tensor pts({vals.size(), 1}, vals);
                std::vector<double> scores = lof_scores(pts, cfg.lof_k);
                for (std::size_t i = 0; i < scores.size(); ++i)
                    if (scores[i] > cfg.lof_threshold) {
                        sb.set_missing(0, pos[i], n, true);
                        ++ch.lof_flagged;
                    }
            }

            // GEV + boxplot conjunction on what remains
            vals.clear();
            pos.clear();
            for (std::size_t t = 0; t < T; ++t)
                if (!sb.is_missing(0, t, n)) {
                    vals.push_back(sb.values.at3(0, t, n));
                    pos.push_back(t);
                }
            if (vals.size() >= 30) {
                GevBoxplotResult r = gev_boxplot_filter(vals, cfg.gev_alpha, cfg.gev_block);
                if (r.fallback_boxplot_only) {
                    ch.gev_fallback = true;
                    report.warnings.push_back("channel '" + ch.name +
                                              "': GEV fit did not converge, boxplot-only verification");
                }
                for (std::size_t i = 0; i < vals.size(); ++i)
                    if (!r.keep[i]) {
                        sb.set_missing(0, pos[i], n, true);
                        ++ch.gev_box_removed;
                    }
            }
        }

        // imputation closes every remaining gap
        std::vector<double> series(T);
        std::vector<std::uint8_t> missing(T);
        for (std::size_t t = 0; t < T; ++t) {
            missing[t] = sb.is_missing(0, t, n) ? 1 : 0;
            series[t] = missing[t] ? 0.0 : sb.values.at3(0, t, n);
        }
        if (ch.lof_flagged + ch.gev_box_removed > 0 || sb.missing_count() > 0) {
            bool any = false;
            for (auto m : missing) any = any || m;
            if (any) {
                GpImputeResult r = impute_gp(series, missing, cfg.gp_lengthscale, cfg.gp_noise);
                ch.gaps_imputed = r.gaps_filled;
                for (std::size_t t = 0; t < T; ++t)
                    if (missing[t]) {
                        sb.values.at3(0, t, n) = r.filled[t];
                        sb.missing[(0 * T + t) * N + n] = 0;
                        ch.max_impute_variance = std::max(ch.max_impute_variance, r.variance[t]);
                    }
            }
        }
        report.channels.push_back(ch);
    }
    return report;
}

} // namespace data
} // namespace ddt

#endif
