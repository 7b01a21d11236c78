// Command-line front end: `tuner run` and `tuner validate`.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "surftune/report.hpp"
#include "surftune/run_config.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 1;
constexpr int exit_abort = 2;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surrogate-model parameter tuner"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out_dir;
    bool baseline = false;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "tune the configured target and write reports");
    run->add_option("--config", config_path, "run configuration (JSON)")->required();
    run->add_option("--seed", seed, "override the master seed");
    run->add_option("--jobs", jobs, "concurrent evaluations")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "override the output directory");
    run->add_flag("--baseline", baseline, "spend the budget on Latin hypercube random search instead");
    run->add_flag("-q,--quiet", quiet, "no progress output");

    auto* validate = app.add_subcommand("validate", "check a run configuration without evaluating anything");
    validate->add_option("--config", config_path, "run configuration (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid;
    }

    surftune::RunConfig cfg;
    try {
        cfg = surftune::load_run_config(config_path);
        if (seed) cfg.tuner.seed = *seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (baseline) cfg.mode = surftune::RunMode::random_search;
    } catch (const surftune::tuning_error& e) {
        std::cerr << e.what() << '\n';
        return exit_invalid;
    }

    if (validate->parsed()) {
        std::cout << "ok: " << cfg.parameters.size() << " parameters, " << cfg.instances.size()
                  << " instances, budget " << cfg.tuner.budget << '\n';
        return exit_ok;
    }

    try {
        return surftune::run_and_report(cfg, jobs, quiet ? nullptr : &std::cerr);
    } catch (const surftune::config_error& e) {
        std::cerr << e.what() << '\n';
        return exit_invalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_abort;
    }
}
