#ifndef DDT_DATA_DATASET_HPP
#define DDT_DATA_DATASET_HPP

#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "ddt/data/csv.hpp"
#include "ddt/data/split.hpp"
#include "ddt/data/standardize.hpp"
#include "ddt/model/embedding.hpp"
#include "ddt/model/network.hpp"

namespace ddt {
namespace data {

/// Windowed, standardized view of a series ready for training: split index
/// sets refer to window start positions in the standardized series.
struct Dataset {
    SeriesBatch series;      // standardized values (batch 0 used)
    ZscoreStats stats;       // train-range statistics for de-standardization
    LabelWindow window;
    std::vector<std::size_t> target_ch, weather_ch;
    std::vector<std::size_t> train_starts, val_starts, test_starts;
    Tensor time_feats;       // L_total x 5

    std::size_t n_targets() const { return target_ch.size(); }
    std::size_t n_weather() const { return weather_ch.size(); }
};

/// Standardize (stats from the leading 70% of rows), window, and split.
inline Dataset build_dataset(const SeriesBatch& raw, const LabelWindow& window, const SplitSpec& split,
                             const std::set<std::int64_t>& holidays = {}) {
    if (raw.missing_count() > 0)
        throw std::invalid_argument("build_dataset: series still contains missing sentinels; impute first");
    Dataset ds;
    ds.window = window;
    ds.series = raw;
    const std::size_t fit_len = static_cast<std::size_t>(
        std::floor(split.train * static_cast<double>(raw.length()) + 1e-9));
    ds.stats = zscore_fit(raw.values, fit_len);
    ds.series.values = zscore_apply(raw.values, ds.stats);
    ds.target_ch = raw.channels_with_role(ChannelRole::target);
    ds.weather_ch = raw.channels_with_role(ChannelRole::covariate_weather);
    if (ds.target_ch.empty()) throw std::invalid_argument("build_dataset: no target channels in schema");
    ds.time_feats = model::time_features(raw.timestamps, holidays);

    const std::vector<std::size_t> starts = window_starts(raw.length(), window);
    if (starts.empty())
        throw std::invalid_argument("build_dataset: series shorter than one window (L+H)");
    const std::size_t span = window.input_len; // cluster on the flattened input part
    Tensor flat({starts.size(), span * ds.target_ch.size()});
    for (std::size_t w = 0; w < starts.size(); ++w)
        for (std::size_t t = 0; t < span; ++t)
            for (std::size_t c = 0; c < ds.target_ch.size(); ++c)
                flat.at2(w, t * ds.target_ch.size() + c) =
                    ds.series.values.at3(0, starts[w] + t, ds.target_ch[c]);
    SplitResult sr = stratified_split(flat, split);
    for (std::size_t i : sr.train) ds.train_starts.push_back(starts[i]);
    for (std::size_t i : sr.val) ds.val_starts.push_back(starts[i]);
    for (std::size_t i : sr.test) ds.test_starts.push_back(starts[i]);
    return ds;
}

/// Assemble a batch from window start positions.
inline model::Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& starts) {
    const std::size_t B = starts.size();
    const std::size_t L = ds.window.input_len, H = ds.window.horizon;
    const std::size_t Nt = ds.n_targets(), Nw = ds.n_weather();
    model::Batch b;
    b.targets_in = Tensor({B, L, Nt});
    if (Nw > 0) b.weather_in = Tensor({B, L, Nw});
    b.time_feats = Tensor({B, L, model::kTimeFeatureCount});
    b.labels = Tensor({B, H, Nt});
    b.last_value = Tensor({B, Nt});
    for (std::size_t i = 0; i < B; ++i) {
        const std::size_t s = starts[i];
        for (std::size_t t = 0; t < L; ++t) {
            for (std::size_t c = 0; c < Nt; ++c)
                b.targets_in.at3(i, t, c) = ds.series.values.at3(0, s + t, ds.target_ch[c]);
            for (std::size_t c = 0; c < Nw; ++c)
                b.weather_in.at3(i, t, c) = ds.series.values.at3(0, s + t, ds.weather_ch[c]);
            for (std::size_t c = 0; c < model::kTimeFeatureCount; ++c)
                b.time_feats.at3(i, t, c) = ds.time_feats.at2(s + t, c);
        }
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t c = 0; c < Nt; ++c)
                b.labels.at3(i, h, c) = ds.series.values.at3(0, s + L + h, ds.target_ch[c]);
        for (std::size_t c = 0; c < Nt; ++c) b.last_value.at2(i, c) = b.targets_in.at3(i, L - 1, c);
    }
    return b;
}

/// De-standardize a B x H x Nt tensor of target-channel values.
inline Tensor destandardize_targets(const Dataset& ds, const Tensor& y) {
    Tensor out = y;
    const std::size_t Nt = ds.n_targets();
    const std::size_t last = y.rank() - 1;
    if (y.dim(last) != Nt) throw ShapeError("destandardize_targets: last axis must be the target channels");
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const std::size_t c = ds.target_ch[i % Nt];
        if (!ds.stats.constant[c]) out[i] = out[i] * ds.stats.stddev[c] + ds.stats.mean[c];
    }
    return out;
}

} // namespace data
} // namespace ddt

#endif
