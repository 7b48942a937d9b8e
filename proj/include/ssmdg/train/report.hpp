#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "ssmdg/train/trainer.hpp"

namespace ssmdg::train {

/// Column order of metrics.csv.
inline constexpr const char* kMetricsHeader =
    "step,sup,cdcr,dar,cmpa,total,utilization,pl_accuracy,n_consensus,n_disagreement";

/// One row per step, runs ordered by (seed, target). Absent accuracies are empty cells.
void write_metrics_csv(std::ostream& out, const ExperimentReport& report);

/// Everything but the step series. Timing lives only in "wall_clock_seconds" fields.
nlohmann::json report_to_json(const ExperimentReport& report);

/// Writes resolved-config.json, metrics.csv and report.json into `dir`.
void write_run_directory(const std::filesystem::path& dir, const ExperimentReport& report);

/// Removes every "wall_clock_seconds" member, recursively.
nlohmann::json strip_wall_clock(nlohmann::json doc);

}  // namespace ssmdg::train
