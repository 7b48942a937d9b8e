#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ssmdg/cli/commands.hpp"

namespace {

void configure_logging() {
    auto logger = spdlog::stderr_color_mt("ssmdg");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("SSMDG_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        if (level != "info") spdlog::warn("SSMDG_LOG='{}' not recognised; using info", level);
        spdlog::set_level(spdlog::level::info);
    }
}

void add_common(CLI::App* cmd, ssmdg::cli::CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "Experiment config (JSON)")->required();
    cmd->add_option("--set", opts.overrides, "Override KEY=VALUE (repeatable)");
    cmd->add_option("--out", opts.out_dir, "Output directory");
    cmd->add_option("--jobs", opts.jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    cmd->add_option("--seed-list", opts.seed_list, "Comma-separated seeds");
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"Semi-supervised multimodal domain generalization experiments"};
    app.require_subcommand(1);

    ssmdg::cli::CommonOptions run_opts, grid_opts;
    auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
    add_common(run, run_opts);
    auto* grid = app.add_subcommand("ablation-grid", "Run every ablation cell");
    add_common(grid, grid_opts);

    ssmdg::cli::DiagOptions diag_opts;
    std::string unused_config;
    auto* diag = app.add_subcommand("diag", "Gradient, gate and EMA self-checks");
    diag->add_option("--config", unused_config, "Accepted for symmetry; the checks use fixed fixtures");
    diag->add_option("--corrupt-kernel", diag_opts.corrupt_kernel, "Test hook: scale one kernel's backward");
    diag->add_option("--corrupt-factor", diag_opts.corrupt_factor, "Relative corruption (default 0.05)");
    diag->add_option("--fixtures", diag_opts.fixtures, "Random fixtures per loss term");
    diag->add_option("--seed", diag_opts.seed, "Fixture seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ssmdg::cli::kExitConfigError;
    }

    if (*run) return ssmdg::cli::run_command(run_opts, std::cout, std::cerr);
    if (*grid) return ssmdg::cli::ablation_grid_command(grid_opts, std::cout, std::cerr);
    return ssmdg::cli::diag_command(diag_opts, std::cout, std::cerr);
}
