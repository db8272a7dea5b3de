#ifndef DDT_CONFIG_HPP
#define DDT_CONFIG_HPP

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddt/data/csv.hpp"
#include "ddt/data/split.hpp"
#include "ddt/model/network.hpp"

namespace ddt {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Resolved run configuration; every field has a recorded default and lands
/// in the emitted manifest.
struct RunConfig {
    // data source: a CSV path, or "synthetic" for the in-repo generator
    std::string dataset = "synthetic";
    std::map<std::string, std::string> roles; // channel name -> target|covariate_weather|covariate_time
    std::string holidays;                     // comma-separated YYYY-MM-DD
    std::size_t synth_length = 2000;
    std::size_t synth_channels = 4;
    std::uint64_t synth_seed = 1;

    // preprocessing
    bool outlier_stage = true;
    std::size_t lof_k = 20;
    double lof_threshold = 1.5;
    double gev_alpha = 0.01;
    std::size_t gev_block = 24;
    double gp_lengthscale = 6.0;
    double gp_noise = 1e-2;
    double w1_threshold = 0.2;
    bool aug_dtw = false;
    bool aug_scale = false;
    bool aug_noise = false;
    std::size_t aug_copies = 0;
    double aug_stretch = 1.2;
    double aug_scale_s = 1.1;
    double aug_snr_db = 20.0;
    std::size_t clusters = 1;
    double ratio_train = 0.70, ratio_val = 0.15, ratio_test = 0.15;
    std::size_t granger_lag = 2;

    // windowing
    std::size_t input_len = 96;
    std::size_t horizon = 24;
    std::size_t window_stride = 8;

    // model
    std::size_t embed_dim = 32;
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t patch_len = 16;
    std::size_t patch_stride = 8;
    std::size_t spectral_window = 16;
    std::size_t top_k = 0;
    std::size_t depth = 0;
    double tau0 = 1.0;
    double gamma = 0.95;
    std::string mode = "full";      // full | ci
    std::string ablation = "none";  // none | no-dual-mask | causal-only | dynamic-only

    // training
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    std::size_t patience = 5;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::size_t ablate_seeds = 3;

    std::string out_dir = "out";

    void validate() const {
        auto fail = [](const std::string& field, const std::string& why) {
            throw ConfigError("config field '" + field + "': " + why);
        };
        if (dataset.empty()) fail("dataset", "must name a CSV path or 'synthetic'");
        if (std::abs(ratio_train + ratio_val + ratio_test - 1.0) > 1e-9)
            fail("ratio_train/ratio_val/ratio_test", "must sum to 1");
        if (clusters < 1) fail("clusters", "must be >= 1");
        if (!data::horizon_supported(horizon))
            fail("horizon", "must be one of {24,36,48,60,96,192,336,720}");
        if (input_len < patch_len) fail("input_len", "must be >= patch_len");
        if (patch_stride < 1 || patch_stride > patch_len) fail("patch_stride", "needs 1 <= S <= K");
        if (spectral_window < 2 || spectral_window > patch_len)
            fail("spectral_window", "must lie in [2, patch_len]");
        if (d_model % heads != 0) fail("d_model", "must be divisible by heads");
        if (mode != "full" && mode != "ci") fail("mode", "must be 'full' or 'ci'");
        if (ablation != "none" && ablation != "no-dual-mask" && ablation != "causal-only" &&
            ablation != "dynamic-only")
            fail("ablation", "must be none|no-dual-mask|causal-only|dynamic-only");
        if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma", "must lie in (0,1)");
        if (tau0 <= 0.0) fail("tau0", "must be positive");
        if (window_stride < 1) fail("window_stride", "must be >= 1");
        if (epochs < 1) fail("epochs", "must be >= 1");
        if (batch_size < 1) fail("batch_size", "must be >= 1");
        if (lr < 0) fail("lr", "must be >= 0");
    }

    model::Variant variant() const {
        if (ablation == "no-dual-mask") return model::Variant::multivariate_only;
        if (ablation == "causal-only") return model::Variant::causal_only;
        if (ablation == "dynamic-only") return model::Variant::dynamic_only;
        return model::Variant::full;
    }

    model::ModelConfig to_model_config(std::size_t n_targets, std::size_t n_weather) const {
        model::ModelConfig mc;
        mc.input_len = input_len;
        mc.n_targets = n_targets;
        mc.n_weather = n_weather;
        mc.embed_dim = embed_dim;
        mc.d_model = d_model;
        mc.heads = heads;
        mc.patch = model::PatchConfig{patch_len, patch_stride};
        mc.spectral_window = spectral_window;
        mc.top_k = top_k;
        mc.encoder_depth = depth;
        mc.tau0 = tau0;
        mc.gamma = gamma;
        mc.head.horizon = horizon;
        mc.variant = variant();
        return mc;
    }

    std::set<std::int64_t> holiday_days() const {
        std::set<std::int64_t> days;
        std::stringstream ss(holidays);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (tok.empty()) continue;
            std::int64_t ts;
            if (!data::detail::parse_timestamp(tok, ts))
                throw ConfigError("config field 'holidays': unparseable date '" + tok + "'");
            days.insert(ts / 86400);
        }
        return days;
    }
};

namespace detail {

inline std::string trim_ws(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

template <class T>
T parse_num(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    T out;
    is >> out;
    if (is.fail() || !is.eof()) throw ConfigError("config field '" + key + "': cannot parse '" + v + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config field '" + key + "': expected a boolean, got '" + v + "'");
}

} // namespace detail

/// Apply one `key = value` assignment; unknown keys are config errors.
inline void set_config_field(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_num;
    if (key == "dataset") c.dataset = value;
    else if (key.rfind("role.", 0) == 0) c.roles[key.substr(5)] = value;
    else if (key == "holidays") c.holidays = value;
    else if (key == "synth_length") c.synth_length = parse_num<std::size_t>(key, value);
    else if (key == "synth_channels") c.synth_channels = parse_num<std::size_t>(key, value);
    else if (key == "synth_seed") c.synth_seed = parse_num<std::uint64_t>(key, value);
    else if (key == "outlier_stage") c.outlier_stage = parse_bool(key, value);
    else if (key == "lof_k") c.lof_k = parse_num<std::size_t>(key, value);
    else if (key == "lof_threshold") c.lof_threshold = parse_num<double>(key, value);
    else if (key == "gev_alpha") c.gev_alpha = parse_num<double>(key, value);
    else if (key == "gev_block") c.gev_block = parse_num<std::size_t>(key, value);
    else if (key == "gp_lengthscale") c.gp_lengthscale = parse_num<double>(key, value);
    else if (key == "gp_noise") c.gp_noise = parse_num<double>(key, value);
    else if (key == "w1_threshold") c.w1_threshold = parse_num<double>(key, value);
    else if (key == "aug_dtw") c.aug_dtw = parse_bool(key, value);
    else if (key == "aug_scale") c.aug_scale = parse_bool(key, value);
    else if (key == "aug_noise") c.aug_noise = parse_bool(key, value);
    else if (key == "aug_copies") c.aug_copies = parse_num<std::size_t>(key, value);
    else if (key == "aug_stretch") c.aug_stretch = parse_num<double>(key, value);
    else if (key == "aug_scale_s") c.aug_scale_s = parse_num<double>(key, value);
    else if (key == "aug_snr_db") c.aug_snr_db = parse_num<double>(key, value);
    else if (key == "clusters") c.clusters = parse_num<std::size_t>(key, value);
    else if (key == "ratio_train") c.ratio_train = parse_num<double>(key, value);
    else if (key == "ratio_val") c.ratio_val = parse_num<double>(key, value);
    else if (key == "ratio_test") c.ratio_test = parse_num<double>(key, value);
    else if (key == "granger_lag") c.granger_lag = parse_num<std::size_t>(key, value);
    else if (key == "input_len") c.input_len = parse_num<std::size_t>(key, value);
    else if (key == "horizon") c.horizon = parse_num<std::size_t>(key, value);
    else if (key == "window_stride") c.window_stride = parse_num<std::size_t>(key, value);
    else if (key == "embed_dim") c.embed_dim = parse_num<std::size_t>(key, value);
    else if (key == "d_model") c.d_model = parse_num<std::size_t>(key, value);
    else if (key == "heads") c.heads = parse_num<std::size_t>(key, value);
    else if (key == "patch_len") c.patch_len = parse_num<std::size_t>(key, value);
    else if (key == "patch_stride") c.patch_stride = parse_num<std::size_t>(key, value);
    else if (key == "spectral_window") c.spectral_window = parse_num<std::size_t>(key, value);
    else if (key == "top_k") c.top_k = parse_num<std::size_t>(key, value);
    else if (key == "depth") c.depth = parse_num<std::size_t>(key, value);
    else if (key == "tau0") c.tau0 = parse_num<double>(key, value);
    else if (key == "gamma") c.gamma = parse_num<double>(key, value);
    else if (key == "mode") c.mode = value;
    else if (key == "ablation") c.ablation = value;
    else if (key == "epochs") c.epochs = parse_num<std::size_t>(key, value);
    else if (key == "batch_size") c.batch_size = parse_num<std::size_t>(key, value);
    else if (key == "patience") c.patience = parse_num<std::size_t>(key, value);
    else if (key == "lr") c.lr = parse_num<double>(key, value);
    else if (key == "seed") c.seed = parse_num<std::uint64_t>(key, value);
    else if (key == "ablate_seeds") c.ablate_seeds = parse_num<std::size_t>(key, value);
    else if (key == "out_dir") c.out_dir = value;
    else throw ConfigError("unknown config field '" + key + "'");
}

/// Flat `key = value` text format, '#' starts a comment.
inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    RunConfig c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim_ws(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        set_config_field(c, detail::trim_ws(line.substr(0, eq)), detail::trim_ws(line.substr(eq + 1)));
    }
    return c;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Canonical manifest text: fixed field order, full precision. Hash of this
/// string identifies a run.
inline std::string manifest_text(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "dataset=" << c.dataset << "\n";
    for (const auto& [k, v] : c.roles) os << "role." << k << "=" << v << "\n";
    os << "holidays=" << c.holidays << "\nsynth_length=" << c.synth_length
       << "\nsynth_channels=" << c.synth_channels << "\nsynth_seed=" << c.synth_seed
       << "\noutlier_stage=" << c.outlier_stage << "\nlof_k=" << c.lof_k
       << "\nlof_threshold=" << c.lof_threshold << "\ngev_alpha=" << c.gev_alpha
       << "\ngev_block=" << c.gev_block << "\ngp_lengthscale=" << c.gp_lengthscale
       << "\ngp_noise=" << c.gp_noise << "\nw1_threshold=" << c.w1_threshold << "\naug_dtw=" << c.aug_dtw
       << "\naug_scale=" << c.aug_scale << "\naug_noise=" << c.aug_noise << "\naug_copies=" << c.aug_copies
       << "\naug_stretch=" << c.aug_stretch << "\naug_scale_s=" << c.aug_scale_s
       << "\naug_snr_db=" << c.aug_snr_db << "\nclusters=" << c.clusters
       << "\nratio_train=" << c.ratio_train << "\nratio_val=" << c.ratio_val
       << "\nratio_test=" << c.ratio_test << "\ngranger_lag=" << c.granger_lag
       << "\ninput_len=" << c.input_len << "\nhorizon=" << c.horizon
       << "\nwindow_stride=" << c.window_stride << "\nembed_dim=" << c.embed_dim
       << "\nd_model=" << c.d_model << "\nheads=" << c.heads << "\npatch_len=" << c.patch_len
       << "\npatch_stride=" << c.patch_stride << "\nspectral_window=" << c.spectral_window
       << "\ntop_k=" << c.top_k << "\ndepth=" << c.depth << "\ntau0=" << c.tau0 << "\ngamma=" << c.gamma
       << "\nmode=" << c.mode << "\nablation=" << c.ablation << "\nepochs=" << c.epochs
       << "\nbatch_size=" << c.batch_size << "\npatience=" << c.patience << "\nlr=" << c.lr
       << "\nseed=" << c.seed << "\nablate_seeds=" << c.ablate_seeds << "\n";
    return os.str();
}

inline std::string manifest_hash_hex(const RunConfig& c) {
    std::ostringstream os;
    os << std::hex << fnv1a64(manifest_text(c));
    return os.str();
}

} // namespace ddt

#endif
