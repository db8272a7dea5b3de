#ifndef DDT_COMMANDS_HPP
#define DDT_COMMANDS_HPP

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddt/config.hpp"
#include "ddt/data/augment.hpp"
#include "ddt/data/dataset.hpp"
#include "ddt/data/granger.hpp"
#include "ddt/data/pipeline.hpp"
#include "ddt/data/synthetic.hpp"
#include "ddt/opchecks.hpp"
#include "ddt/train/checkpoint.hpp"
#include "ddt/train/trainer.hpp"

namespace ddt {
namespace cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

inline data::CsvSchema schema_from_config(const RunConfig& cfg) {
    data::CsvSchema schema;
    for (const auto& [name, role] : cfg.roles) {
        if (role == "target")
            schema.roles[name] = data::ChannelRole::target;
        else if (role == "covariate_weather")
            schema.roles[name] = data::ChannelRole::covariate_weather;
        else if (role == "covariate_time")
            schema.roles[name] = data::ChannelRole::covariate_time;
        else
            throw ConfigError("config field 'role." + name + "': unknown role '" + role + "'");
    }
    return schema;
}

inline data::SeriesBatch load_series(const RunConfig& cfg) {
    if (cfg.dataset == "synthetic") {
        data::SyntheticSpec spec;
        spec.length = cfg.synth_length;
        spec.channels = cfg.synth_channels;
        spec.seed = cfg.synth_seed;
        return data::synthesize(spec);
    }
    return data::load_csv(cfg.dataset, schema_from_config(cfg));
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw data::IoError("cannot write '" + path.string() + "'");
    out << text;
}

inline json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw data::IoError("cannot open '" + path.string() + "'");
    json j;
    in >> j;
    return j;
}

inline data::SplitSpec split_spec_from(const RunConfig& cfg) {
    data::SplitSpec split;
    split.train = cfg.ratio_train;
    split.val = cfg.ratio_val;
    split.test = cfg.ratio_test;
    split.cluster_count = cfg.clusters;
    split.seed = cfg.seed;
    return split;
}

/// Rebuild the windowed dataset from the preprocess artifacts; the series in
/// standardized.csv is used verbatim (no re-standardization) and stats.json
/// supplies the de-standardization statistics.
inline data::Dataset load_preprocessed(const RunConfig& cfg) {
    const fs::path dir(cfg.out_dir);
    if (!fs::exists(dir / "standardized.csv") || !fs::exists(dir / "stats.json"))
        throw data::IoError("preprocessed data not found under '" + cfg.out_dir +
                            "': run the preprocess command first");
    json stats = load_json(dir / "stats.json");

    data::CsvSchema schema;
    for (std::size_t i = 0; i < stats["names"].size(); ++i) {
        const std::string role = stats["roles"][i];
        data::ChannelRole r = data::ChannelRole::target;
        if (role == "covariate_weather") r = data::ChannelRole::covariate_weather;
        if (role == "covariate_time") r = data::ChannelRole::covariate_time;
        schema.roles[stats["names"][i]] = r;
    }
    data::SeriesBatch series = data::load_csv((dir / "standardized.csv").string(), schema);

    data::Dataset ds;
    ds.series = series;
    ds.stats.mean = stats["mean"].get<std::vector<double>>();
    ds.stats.stddev = stats["std"].get<std::vector<double>>();
    ds.stats.constant = stats["constant"].get<std::vector<std::uint8_t>>();
    ds.window = data::LabelWindow{cfg.input_len, cfg.horizon, cfg.window_stride};
    ds.target_ch = series.channels_with_role(data::ChannelRole::target);
    ds.weather_ch = series.channels_with_role(data::ChannelRole::covariate_weather);
    ds.time_feats = model::time_features(series.timestamps, cfg.holiday_days());

    const std::vector<std::size_t> starts = data::window_starts(series.length(), ds.window);
    if (starts.empty()) throw ConfigError("series too short for input_len + horizon");
    Tensor flat({starts.size(), ds.window.input_len * ds.target_ch.size()});
    for (std::size_t w = 0; w < starts.size(); ++w)
        for (std::size_t t = 0; t < ds.window.input_len; ++t)
            for (std::size_t c = 0; c < ds.target_ch.size(); ++c)
                flat.at2(w, t * ds.target_ch.size() + c) =
                    series.values.at3(0, starts[w] + t, ds.target_ch[c]);
    data::SplitResult sr = data::stratified_split(flat, split_spec_from(cfg));
    for (std::size_t i : sr.train) ds.train_starts.push_back(starts[i]);
    for (std::size_t i : sr.val) ds.val_starts.push_back(starts[i]);
    for (std::size_t i : sr.test) ds.test_starts.push_back(starts[i]);
    return ds;
}

inline std::string checkpoint_name(const RunConfig& cfg, long ci_channel = -1) {
    std::string name = "checkpoint_" + (cfg.ablation == "none" ? std::string("full") : cfg.ablation) + "_h" +
                       std::to_string(cfg.horizon);
    if (cfg.mode == "ci") name += "_ci";
    if (ci_channel >= 0) name += "_ch" + std::to_string(ci_channel);
    return name + ".bin";
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

inline int cmd_preprocess(const RunConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    const std::string hash = manifest_hash_hex(cfg);
    data::SeriesBatch raw = load_series(cfg);

    data::CleaningConfig ccfg;
    ccfg.outlier_stage = cfg.outlier_stage;
    ccfg.lof_k = cfg.lof_k;
    ccfg.lof_threshold = cfg.lof_threshold;
    ccfg.gev_alpha = cfg.gev_alpha;
    ccfg.gev_block = cfg.gev_block;
    ccfg.gp_lengthscale = cfg.gp_lengthscale;
    ccfg.gp_noise = cfg.gp_noise;
    data::CleaningReport creport = data::clean_series(raw, ccfg);

    data::LabelWindow window{cfg.input_len, cfg.horizon, cfg.window_stride};
    data::Dataset ds = data::build_dataset(raw, window, split_spec_from(cfg), cfg.holiday_days());

    // Wasserstein check per channel over the standardized fit range
    const std::size_t fit_len = static_cast<std::size_t>(
        std::floor(cfg.ratio_train * static_cast<double>(raw.length()) + 1e-9));
    json w1 = json::array();
    for (std::size_t n = 0; n < ds.series.channels(); ++n) {
        json rec;
        rec["channel"] = ds.series.channel_names[n];
        if (fit_len >= 100 && !ds.stats.constant[n]) {
            std::vector<double> vals(fit_len);
            for (std::size_t t = 0; t < fit_len; ++t) vals[t] = ds.series.values.at3(0, t, n);
            data::W1Result r = data::wasserstein_check(vals, cfg.w1_threshold);
            rec["distance"] = r.distance;
            rec["pass"] = r.pass;
        } else {
            rec["skipped"] = true;
        }
        w1.push_back(rec);
    }

    // Granger causal-relevance screen over ordered channel pairs (reported,
    // never used to drop channels unless the operator opts in downstream)
    json granger = json::array();
    if (cfg.granger_lag > 0 && ds.series.length() > 10 * cfg.granger_lag) {
        for (std::size_t i = 0; i < ds.series.channels(); ++i)
            for (std::size_t j = 0; j < ds.series.channels(); ++j) {
                if (i == j) continue;
                std::vector<double> x(ds.series.length()), y(ds.series.length());
                for (std::size_t t = 0; t < ds.series.length(); ++t) {
                    x[t] = ds.series.values.at3(0, t, i);
                    y[t] = ds.series.values.at3(0, t, j);
                }
                try {
                    data::GrangerResult r = data::granger_screen(x, y, cfg.granger_lag);
                    granger.push_back({{"from", ds.series.channel_names[i]},
                                       {"to", ds.series.channel_names[j]},
                                       {"f_stat", r.f_stat},
                                       {"p_value", r.p_value},
                                       {"rank_warning", r.rank_warning}});
                } catch (const std::exception& e) {
                    granger.push_back({{"from", ds.series.channel_names[i]},
                                       {"to", ds.series.channel_names[j]},
                                       {"error", e.what()}});
                }
            }
    }

    // augmented training-region copies
    std::size_t augmented = 0;
    if (cfg.aug_copies > 0 && (cfg.aug_dtw || cfg.aug_scale || cfg.aug_noise)) {
        data::AugmentSpec aspec;
        aspec.dtw_warp = cfg.aug_dtw;
        aspec.log_scale = cfg.aug_scale;
        aspec.snr_noise = cfg.aug_noise;
        aspec.max_stretch = cfg.aug_stretch;
        aspec.scale_s = cfg.aug_scale_s;
        aspec.snr_db = cfg.aug_snr_db;
        RngStream arng(cfg.seed ^ 0xa6ULL);
        Tensor train_region({fit_len, ds.series.channels()});
        for (std::size_t t = 0; t < fit_len; ++t)
            for (std::size_t n = 0; n < ds.series.channels(); ++n)
                train_region.at2(t, n) = ds.series.values.at3(0, t, n);
        for (std::size_t k = 0; k < cfg.aug_copies; ++k) {
            Tensor aug = data::augment(train_region, aspec, arng);
            data::SeriesBatch out = ds.series;
            out.values = Tensor({1, fit_len, ds.series.channels()}, aug.vec());
            out.timestamps.assign(ds.series.timestamps.begin(), ds.series.timestamps.begin() + fit_len);
            out.missing.assign(fit_len * ds.series.channels(), 0);
            data::save_csv(out, (fs::path(cfg.out_dir) / ("augmented_" + std::to_string(k) + ".csv")).string());
            ++augmented;
        }
    }

    // artifacts
    data::save_csv(ds.series, (fs::path(cfg.out_dir) / "standardized.csv").string());
    {
        json stats;
        stats["mean"] = ds.stats.mean;
        stats["std"] = ds.stats.stddev;
        stats["constant"] = ds.stats.constant;
        stats["names"] = ds.series.channel_names;
        std::vector<std::string> roles;
        for (auto r : ds.series.roles) roles.push_back(data::role_name(r));
        stats["roles"] = roles;
        stats["fit_len"] = fit_len;
        stats["manifest_hash"] = hash;
        write_text(fs::path(cfg.out_dir) / "stats.json", stats.dump(2));
    }
    auto write_split = [&](const char* name, const std::vector<std::size_t>& starts) {
        std::ostringstream os;
        os << "window_start,manifest_hash\n";
        for (std::size_t s : starts) os << s << "," << hash << "\n";
        write_text(fs::path(cfg.out_dir) / name, os.str());
    };
    write_split("split_train.csv", ds.train_starts);
    write_split("split_val.csv", ds.val_starts);
    write_split("split_test.csv", ds.test_starts);

    json report;
    report["manifest_hash"] = hash;
    report["rows"] = ds.series.length();
    report["channels"] = ds.series.channels();
    json chans = json::array();
    for (const auto& c : creport.channels)
        chans.push_back({{"channel", c.name},
                         {"lof_flagged", c.lof_flagged},
                         {"gev_box_removed", c.gev_box_removed},
                         {"gaps_imputed", c.gaps_imputed},
                         {"max_impute_variance", c.max_impute_variance},
                         {"gev_fallback", c.gev_fallback}});
    report["cleaning"] = chans;
    report["outliers_removed"] = creport.total_outliers();
    report["gaps_imputed"] = creport.total_imputed();
    report["warnings"] = creport.warnings;
    report["wasserstein"] = w1;
    report["granger"] = granger;
    report["split_sizes"] = {{"train", ds.train_starts.size()},
                             {"val", ds.val_starts.size()},
                             {"test", ds.test_starts.size()}};
    report["augmented_copies"] = augmented;
    write_text(fs::path(cfg.out_dir) / "report.json", report.dump(2));
    write_text(fs::path(cfg.out_dir) / "manifest.json",
               json{{"manifest_hash", hash}, {"manifest", manifest_text(cfg)}}.dump(2));

    std::cout << "preprocess: " << ds.series.length() << " rows, " << ds.series.channels()
              << " channels; outliers removed " << creport.total_outliers() << ", gaps imputed "
              << creport.total_imputed() << "; splits " << ds.train_starts.size() << "/"
              << ds.val_starts.size() << "/" << ds.test_starts.size() << "; manifest " << hash << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline train::TrainConfig train_config_from(const RunConfig& cfg) {
    train::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.patience = cfg.patience;
    tc.seed = cfg.seed;
    return tc;
}

inline void write_train_log(const fs::path& path, const std::vector<train::EpochLog>& logs,
                            const std::string& hash) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& l : logs) {
        json rec{{"epoch", l.epoch},        {"train_loss", l.train_loss}, {"val_loss", l.val_loss},
                 {"val_mse", l.val_mse},    {"val_mae", l.val_mae},       {"tau", l.tau},
                 {"manifest_hash", hash}};
        os << rec.dump() << "\n";
    }
    write_text(path, os.str());
}

inline int cmd_train(const RunConfig& cfg) {
    cfg.validate();
    const std::string hash = manifest_hash_hex(cfg);
    data::Dataset ds = load_preprocessed(cfg);
    const fs::path dir(cfg.out_dir);

    if (cfg.mode == "ci") {
        // one dedicated instance per target channel, trained independently
        for (std::size_t n = 0; n < ds.n_targets(); ++n) {
            RunConfig sub = cfg;
            model::ModelConfig mc = sub.to_model_config(1, 0);
            mc.channel_expert = false;
            model::DdtModel m(mc, cfg.seed + n * 7919);
            data::Dataset dsn = ds;
            dsn.target_ch = {ds.target_ch[n]};
            dsn.weather_ch.clear();
            train::TrainResult tr = train::train_model(m, dsn, train_config_from(cfg));
            if (!tr.best_params.empty()) train::restore_params(m, tr.best_params);
            train::CheckpointMeta meta{fnv1a64(manifest_text(cfg)),
                                       static_cast<std::uint32_t>(tr.best_epoch), tr.best_val_loss};
            train::save_checkpoint((dir / checkpoint_name(cfg, static_cast<long>(n))).string(), m.params(),
                                   meta);
            write_train_log(dir / ("train_log_ch" + std::to_string(n) + ".jsonl"), tr.logs, hash);
            std::cout << "train[ci ch" << n << "]: best epoch " << tr.best_epoch << " val loss "
                      << tr.best_val_loss << "\n";
        }
        return 0;
    }

    model::ModelConfig mc = cfg.to_model_config(ds.n_targets(), ds.n_weather());
    model::DdtModel m(mc, cfg.seed);
    if (cfg.ablation == "dynamic-only")
        std::cerr << "warning: dynamic-only ablation removes the causal restriction; this variant is "
                     "causality-violating by construction\n";
    train::TrainResult tr = train::train_model(m, ds, train_config_from(cfg));
    if (!tr.best_params.empty()) train::restore_params(m, tr.best_params);
    train::CheckpointMeta meta{fnv1a64(manifest_text(cfg)), static_cast<std::uint32_t>(tr.best_epoch),
                               tr.best_val_loss};
    train::save_checkpoint((dir / checkpoint_name(cfg)).string(), m.params(), meta);
    write_train_log(dir / "train_log.jsonl", tr.logs, hash);
    std::cout << "train: " << tr.logs.size() << " epochs, best " << tr.best_epoch << " val loss "
              << tr.best_val_loss << (tr.early_stopped ? " (early stop)" : "") << "; manifest " << hash
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct ResultRow {
    std::string dataset;
    std::size_t horizon = 0;
    std::string variant;
    double mse = 0, mae = 0;
    double runtime_seconds = 0;
    std::uint64_t seed = 0;
};

inline std::string result_table(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "dataset" << std::setw(9) << "horizon" << std::setw(14) << "variant"
       << std::setw(12) << "mse" << std::setw(12) << "mae" << std::setw(12) << "runtime_s" << "seed\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(14) << r.dataset << std::setw(9) << r.horizon << std::setw(14)
           << r.variant << std::setw(12) << std::setprecision(6) << r.mse << std::setw(12) << r.mae
           << std::setw(12) << std::setprecision(4) << r.runtime_seconds << r.seed << "\n";
    }
    return os.str();
}

inline void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows,
                              const std::string& hash) {
    std::ostringstream os;
    os.precision(17);
    os << "dataset,horizon,variant,mse,mae,runtime_seconds,seed,manifest_hash\n";
    for (const auto& r : rows)
        os << r.dataset << "," << r.horizon << "," << r.variant << "," << r.mse << "," << r.mae << ","
           << r.runtime_seconds << "," << r.seed << "," << hash << "\n";
    write_text(path, os.str());
}

inline std::string dataset_label(const RunConfig& cfg) {
    if (cfg.dataset == "synthetic") return "synthetic";
    return fs::path(cfg.dataset).stem().string();
}

inline int cmd_eval(const RunConfig& cfg) {
    cfg.validate();
    const std::string hash = manifest_hash_hex(cfg);
    const fs::path dir(cfg.out_dir);
    data::Dataset ds = load_preprocessed(cfg);
    std::vector<ResultRow> rows;

    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.mode == "ci") {
        model::ModelConfig mc = cfg.to_model_config(1, 0);
        mc.channel_expert = false;
        model::CiModel ci(mc, ds.n_targets(), cfg.seed);
        for (std::size_t n = 0; n < ds.n_targets(); ++n) {
            const fs::path p = dir / checkpoint_name(cfg, static_cast<long>(n));
            train::load_checkpoint(p.string(), ci.instance(n).params());
        }
        // median-track metrics over the test windows
        double se = 0, ae = 0;
        std::size_t cnt = 0;
        const std::size_t med = mc.head.median_index();
        for (std::size_t off = 0; off < ds.test_starts.size(); off += cfg.batch_size) {
            std::vector<std::size_t> chunk(
                ds.test_starts.begin() + off,
                ds.test_starts.begin() + std::min(off + cfg.batch_size, ds.test_starts.size()));
            model::Batch batch = data::make_batch(ds, chunk);
            RngStream noise(cfg.seed);
            Tensor pred = ci.forward_values(batch, model::RunMode::eval, noise);
            Tensor median({pred.dim(0), pred.dim(1), pred.dim(2)});
            for (std::size_t b = 0; b < pred.dim(0); ++b)
                for (std::size_t h = 0; h < pred.dim(1); ++h)
                    for (std::size_t c = 0; c < pred.dim(2); ++c)
                        median.at3(b, h, c) = pred.at4(b, h, c, med);
            Tensor pd = data::destandardize_targets(ds, median);
            Tensor yd = data::destandardize_targets(ds, batch.labels);
            for (std::size_t i = 0; i < pd.numel(); ++i) {
                const double d = yd[i] - pd[i];
                se += d * d;
                ae += std::abs(d);
                ++cnt;
            }
        }
        ResultRow row;
        row.dataset = dataset_label(cfg);
        row.horizon = cfg.horizon;
        row.variant = "ci";
        row.mse = cnt ? se / cnt : 0;
        row.mae = cnt ? ae / cnt : 0;
        row.seed = cfg.seed;
        row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
    } else {
        model::ModelConfig mc = cfg.to_model_config(ds.n_targets(), ds.n_weather());
        model::DdtModel m(mc, cfg.seed);
        train::load_checkpoint((dir / checkpoint_name(cfg)).string(), m.params());
        model::Metrics mt = train::evaluate(m, ds, ds.test_starts, cfg.batch_size, cfg.seed);
        ResultRow row;
        row.dataset = dataset_label(cfg);
        row.horizon = cfg.horizon;
        row.variant = cfg.ablation == "none" ? "full" : cfg.ablation;
        row.mse = mt.mse;
        row.mae = mt.mae;
        row.seed = cfg.seed;
        row.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);
    }

    std::cout << result_table(rows);
    write_results_csv(dir / "results.csv", rows, hash);
    return 0;
}

// ---------------------------------------------------------------------------
// forecast
// ---------------------------------------------------------------------------

inline int cmd_forecast(const RunConfig& cfg, const std::string& dump_masks_path = "") {
    cfg.validate();
    const std::string hash = manifest_hash_hex(cfg);
    const fs::path dir(cfg.out_dir);
    data::Dataset ds = load_preprocessed(cfg);
    if (cfg.mode == "ci")
        throw ConfigError("forecast currently targets full mode; evaluate CI runs with the eval command");

    model::ModelConfig mc = cfg.to_model_config(ds.n_targets(), ds.n_weather());
    model::DdtModel m(mc, cfg.seed);
    train::load_checkpoint((dir / checkpoint_name(cfg)).string(), m.params());

    std::ostringstream os;
    os.precision(17);
    os << "window_start,step,channel,quantile,value,manifest_hash\n";
    for (std::size_t off = 0; off < ds.test_starts.size(); off += cfg.batch_size) {
        std::vector<std::size_t> chunk(
            ds.test_starts.begin() + off,
            ds.test_starts.begin() + std::min(off + cfg.batch_size, ds.test_starts.size()));
        model::Batch batch = data::make_batch(ds, chunk);
        Graph g;
        RngStream noise(cfg.seed);
        model::ForwardOut fo = m.forward(g, batch, model::RunMode::eval, noise);
        const Tensor& pred = g.value(fo.prediction);
        for (std::size_t b = 0; b < chunk.size(); ++b)
            for (std::size_t h = 0; h < cfg.horizon; ++h)
                for (std::size_t c = 0; c < ds.n_targets(); ++c)
                    for (std::size_t q = 0; q < mc.head.quantiles.size(); ++q) {
                        const std::size_t ch = ds.target_ch[c];
                        double v = pred.at4(b, h, c, q);
                        if (!ds.stats.constant[ch]) v = v * ds.stats.stddev[ch] + ds.stats.mean[ch];
                        os << chunk[b] << "," << h << "," << ds.series.channel_names[ch] << ","
                           << mc.head.quantiles[q] << "," << v << "," << hash << "\n";
                    }
        if (off == 0 && !dump_masks_path.empty()) {
            json dump;
            dump["manifest_hash"] = hash;
            dump["k"] = m.top_k();
            dump["tau"] = m.metric().tau();
            dump["patch_count"] = m.geometry().count;
            auto mat = [](const Tensor& t) {
                std::vector<std::vector<double>> rows;
                for (std::size_t i = 0; i < t.dim(0); ++i)
                    rows.emplace_back(t.data() + i * t.dim(1), t.data() + (i + 1) * t.dim(1));
                return rows;
            };
            dump["causal"] = mat(model::build_causal_mask(m.geometry().count));
            dump["fused"] = mat(fo.fused_mask_example);
            if (!fo.hard_masks.empty()) {
                dump["hard"] = mat(fo.hard_masks[0]);
                dump["relaxed"] = mat(fo.relaxed_masks[0]);
            }
            write_text(dump_masks_path, dump.dump(2));
        }
    }
    write_text(dir / "forecast.csv", os.str());
    std::cout << "forecast: " << ds.test_starts.size() << " windows x " << cfg.horizon << " steps x "
              << ds.n_targets() << " channels x " << mc.head.quantiles.size() << " quantiles; manifest "
              << hash << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

inline int cmd_ablate(const RunConfig& cfg) {
    cfg.validate();
    const std::string hash = manifest_hash_hex(cfg);
    const fs::path dir(cfg.out_dir);
    data::Dataset ds = load_preprocessed(cfg);

    const std::vector<std::string> variants = {"full", "no-dual-mask", "causal-only", "dynamic-only"};
    std::vector<ResultRow> rows;
    json summary = json::array();
    for (const auto& variant : variants) {
        if (variant == "dynamic-only")
            std::cerr << "warning: dynamic-only ablation removes the causal restriction; "
                         "causality-violating variant\n";
        std::vector<double> mses, maes;
        for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
            RunConfig sub = cfg;
            sub.ablation = variant == "full" ? "none" : variant;
            sub.seed = cfg.seed + s;
            const auto t0 = std::chrono::steady_clock::now();
            model::ModelConfig mc = sub.to_model_config(ds.n_targets(), ds.n_weather());
            model::DdtModel m(mc, sub.seed);
            train::TrainResult tr = train::train_model(m, ds, train_config_from(sub));
            if (!tr.best_params.empty()) train::restore_params(m, tr.best_params);
            model::Metrics mt = train::evaluate(m, ds, ds.test_starts, cfg.batch_size, sub.seed);
            ResultRow row;
            row.dataset = dataset_label(cfg);
            row.horizon = cfg.horizon;
            row.variant = variant;
            row.mse = mt.mse;
            row.mae = mt.mae;
            row.seed = sub.seed;
            row.runtime_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rows.push_back(row);
            mses.push_back(mt.mse);
            maes.push_back(mt.mae);
            std::cout << "ablate " << variant << " seed " << sub.seed << ": test mse " << mt.mse << " mae "
                      << mt.mae << "\n";
        }
        auto mean_std = [](const std::vector<double>& v) {
            double m = 0;
            for (double x : v) m += x;
            m /= v.size();
            double s = 0;
            for (double x : v) s += (x - m) * (x - m);
            return std::pair<double, double>(m, std::sqrt(s / v.size()));
        };
        auto [mm, ms] = mean_std(mses);
        auto [am, as] = mean_std(maes);
        summary.push_back({{"variant", variant},
                           {"mse_mean", mm},
                           {"mse_std", ms},
                           {"mae_mean", am},
                           {"mae_std", as},
                           {"seeds", cfg.ablate_seeds}});
        std::cout << "ablate " << variant << ": mse " << mm << " +- " << ms << ", mae " << am << " +- " << as
                  << "\n";
    }
    std::cout << result_table(rows);
    write_results_csv(dir / "ablation.csv", rows, hash);
    write_text(dir / "ablation_summary.json", json{{"manifest_hash", hash}, {"rows", summary}}.dump(2));
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline int cmd_gradcheck(const RunConfig& cfg, std::size_t points = 20) {
    fs::create_directories(cfg.out_dir);
    const std::string hash = manifest_hash_hex(cfg);
    auto reports = run_op_checks(op_check_registry(), points, cfg.seed);
    json recs = json::array();
    bool all_pass = true;
    for (const auto& r : reports) {
        recs.push_back(
            {{"op", r.name}, {"max_rel_err", r.max_rel_err}, {"tolerance", r.tolerance}, {"pass", r.pass}});
        all_pass = all_pass && r.pass;
        std::cout << (r.pass ? "[pass] " : "[FAIL] ") << std::left << std::setw(42) << r.name
                  << " max_rel_err " << std::scientific << std::setprecision(3) << r.max_rel_err
                  << std::defaultfloat << " (tol " << r.tolerance << ")\n";
    }
    write_text(fs::path(cfg.out_dir) / "gradcheck.json",
               json{{"manifest_hash", hash}, {"points", points}, {"ops", recs}}.dump(2));
    return all_pass ? 0 : 1;
}

} // namespace cli
} // namespace ddt

#endif
