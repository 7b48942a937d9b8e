#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ssmdg/train/config.hpp"

namespace ssmdg::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfigError = 2,
    kExitNumericError = 3,
    kExitPartialGrid = 4,
};

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::string> out_dir;
    std::size_t jobs = 1;
    std::optional<std::string> seed_list;  // comma-separated
};

/// Config file plus overrides, --out and --seed-list. Throws util::SchemaError.
train::ExperimentConfig resolve_config(const CommonOptions& options);

/// Machine-readable error record written to `err` (one JSON object per line).
void report_error(std::ostream& err, int code, const std::string& kind, const std::vector<std::string>& messages);

int run_command(const CommonOptions& options, std::ostream& out, std::ostream& err);

/// Cell names of the ablation grid, in output order.
std::vector<std::string> grid_cells();
/// Filesystem-safe directory name for a cell.
std::string cell_directory(const std::string& cell);
int ablation_grid_command(const CommonOptions& options, std::ostream& out, std::ostream& err);

struct DiagOptions {
    std::optional<std::string> corrupt_kernel;
    double corrupt_factor = 0.05;
    std::size_t fixtures = 20;
    std::uint64_t seed = 0;
};
int diag_command(const DiagOptions& options, std::ostream& out, std::ostream& err);

}  // namespace ssmdg::cli
