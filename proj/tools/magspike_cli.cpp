// Command-line front end: characterize, fit, train, eval, cosim, plus a
// synthetic dataset generator for running the pipeline without MNIST files.
//
// Exit codes: 0 ok, 2 configuration error, 3 runtime error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "magspike/errors.hpp"
#include "magspike/harness.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string backend;
    std::int64_t seed = -1;
    std::vector<std::size_t> k_list;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config JSON")->required();
    cmd->add_option("--seed", args.seed, "master seed (overrides config)");
    cmd->add_option("--out-dir", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--backend", args.backend, "behavioral | llg (overrides config)");
    cmd->add_option("--k", args.k_list, "spike counts for eval (overrides config)");
}

int run_mode(const std::string& mode, const CommonArgs& args) {
    auto config = magspike::load_config(args.config_path);
    config.mode = mode;
    config.raw["mode"] = mode;
    if (args.seed >= 0) {
        config.seed = static_cast<std::uint64_t>(args.seed);
        config.raw["seed"] = config.seed;
    }
    if (!args.out_dir.empty()) {
        config.out_dir = args.out_dir;
        config.raw["out_dir"] = args.out_dir;
    }
    if (!args.backend.empty()) {
        if (args.backend != "behavioral" && args.backend != "llg")
            throw magspike::ConfigError("backend: must be 'behavioral' or 'llg'");
        config.backend = args.backend;
        config.raw["backend"] = args.backend;
    }
    if (!args.k_list.empty()) {
        config.eval_spec.k_list = args.k_list;
        config.raw["eval"]["k_list"] = args.k_list;
    }

    const auto report = magspike::run(config);
    std::cout << "mode " << report.mode << " done in " << report.wall_clock_s << " s; artifacts in "
              << config.out_dir << "\n";
    if (!std::isnan(report.software_accuracy))
        std::cout << "  software accuracy: " << report.software_accuracy << "\n";
    for (const auto& [k, acc] : report.accuracy_per_k)
        std::cout << "  k=" << k << " accuracy: " << acc << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"superparamagnetic MTJ temporal-coding co-simulation toolkit"};
    app.require_subcommand(1);

    const std::vector<std::string> modes = {"characterize", "fit", "train",
                                            "eval", "cosim", "synth"};
    const std::vector<std::string> help = {
        "lifetime contour map over the transformed (V1, V2) plane",
        "calibrate basis angles, operating point, and activation",
        "train a temporally encoded network",
        "software argmin + stochastic k-spike evaluation",
        "evaluate with LLG-simulated output devices",
        "generate a synthetic digit dataset in IDX format",
    };
    std::vector<CommonArgs> args(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i)
        add_common(app.add_subcommand(modes[i], help[i]), args[i]);

    CLI11_PARSE(app, argc, argv);

    try {
        for (std::size_t i = 0; i < modes.size(); ++i)
            if (app.get_subcommand(modes[i])->parsed()) return run_mode(modes[i], args[i]);
        std::cerr << "no subcommand given\n";
        return 2;
    } catch (const magspike::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const magspike::FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
}
