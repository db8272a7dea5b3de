// ddt: dual-masking time-series forecaster command line.
//
// Subcommands: preprocess | train | eval | forecast | ablate | gradcheck.
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ddt/commands.hpp"
#include "ddt/config.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string seed;
    std::string mode;
    std::string horizon;
    std::string out_dir;
    std::vector<std::string> sets; // extra key=value overrides
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "flat key=value config file");
    cmd->add_option("--seed", opts.seed, "random seed override");
    cmd->add_option("--mode", opts.mode, "full or ci");
    cmd->add_option("--horizon", opts.horizon, "forecast horizon override");
    cmd->add_option("--out", opts.out_dir, "artifact directory");
    cmd->add_option("--set", opts.sets, "additional key=value overrides")->take_all();
}

ddt::RunConfig resolve_config(const CommonOpts& opts) {
    ddt::RunConfig cfg;
    if (!opts.config_path.empty()) cfg = ddt::load_config(opts.config_path);
    if (!opts.seed.empty()) ddt::set_config_field(cfg, "seed", opts.seed);
    if (!opts.mode.empty()) ddt::set_config_field(cfg, "mode", opts.mode);
    if (!opts.horizon.empty()) ddt::set_config_field(cfg, "horizon", opts.horizon);
    if (!opts.out_dir.empty()) ddt::set_config_field(cfg, "out_dir", opts.out_dir);
    for (const auto& kv : opts.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ddt::ConfigError("--set expects key=value, got '" + kv + "'");
        ddt::set_config_field(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DDT dual-masking time-series forecaster"};
    app.require_subcommand(1);

    CommonOpts o_pre, o_train, o_eval, o_fore, o_abl, o_grad;
    std::string dump_masks;
    std::size_t grad_points = 20;

    add_common(app.add_subcommand("preprocess", "clean, standardize, split, and screen a dataset"), o_pre);
    add_common(app.add_subcommand("train", "train a model on preprocessed data"), o_train);
    add_common(app.add_subcommand("eval", "evaluate a checkpoint on the test split"), o_eval);
    CLI::App* fore = app.add_subcommand("forecast", "emit quantile forecasts as CSV");
    add_common(fore, o_fore);
    fore->add_option("--dump-masks", dump_masks, "write the fused/dynamic mask matrices as JSON");
    add_common(app.add_subcommand("ablate", "run the four mask/expert variants over several seeds"), o_abl);
    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of every registered op");
    add_common(grad, o_grad);
    grad->add_option("--points", grad_points, "random points per op");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("preprocess")) return ddt::cli::cmd_preprocess(resolve_config(o_pre));
        if (app.got_subcommand("train")) return ddt::cli::cmd_train(resolve_config(o_train));
        if (app.got_subcommand("eval")) return ddt::cli::cmd_eval(resolve_config(o_eval));
        if (app.got_subcommand("forecast")) return ddt::cli::cmd_forecast(resolve_config(o_fore), dump_masks);
        if (app.got_subcommand("ablate")) return ddt::cli::cmd_ablate(resolve_config(o_abl));
        if (app.got_subcommand("gradcheck")) return ddt::cli::cmd_gradcheck(resolve_config(o_grad), grad_points);
    } catch (const ddt::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
