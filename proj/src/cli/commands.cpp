#include "ssmdg/cli/commands.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "ssmdg/cli/diagnostics.hpp"
#include "ssmdg/train/report.hpp"
#include "ssmdg/train/trainer.hpp"
#include "ssmdg/util/strict_json.hpp"

namespace ssmdg::cli {

using nlohmann::json;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(csv);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw util::SchemaError({"--seed-list: '" + item + "' is not a non-negative integer"});
        seeds.push_back(v);
    }
    if (seeds.empty()) throw util::SchemaError({"--seed-list: no seeds given"});
    return seeds;
}

}  // namespace

train::ExperimentConfig resolve_config(const CommonOptions& options) {
    std::ifstream in(options.config_path);
    if (!in) throw util::SchemaError({"$: cannot open config file '" + options.config_path + "'"});
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw util::SchemaError({std::string("$: invalid JSON (") + e.what() + ")"});
    }
    train::apply_overrides(doc, options.overrides);
    auto config = train::config_from_json(doc);
    if (options.out_dir) config.output_dir = *options.out_dir;
    if (options.seed_list) config.seeds = parse_seed_list(*options.seed_list);
    config.validate();
    return config;
}

void report_error(std::ostream& err, int code, const std::string& kind, const std::vector<std::string>& messages) {
    err << json{{"error", kind}, {"exit_code", code}, {"messages", messages}}.dump() << '\n';
}

int run_command(const CommonOptions& options, std::ostream& out, std::ostream& err) {
    train::ExperimentConfig config;
    try {
        config = resolve_config(options);
    } catch (const util::SchemaError& e) {
        report_error(err, kExitConfigError, "config", e.errors());
        return kExitConfigError;
    }
    try {
        const auto report = train::run_experiment(config, options.jobs);
        train::write_run_directory(config.output_dir, report);
        out << fmt::format("{}: mean accuracy {:.4f} (std {:.4f}) over {} seed(s); wrote {}\n", config.variant,
                           report.mean_accuracy, report.std_accuracy, report.runs.size(), config.output_dir);
    } catch (const train::NumericError& e) {
        report_error(err, kExitNumericError, "numeric", {e.what()});
        return kExitNumericError;
    } catch (const diff::NonFiniteError& e) {
        report_error(err, kExitNumericError, "numeric", {e.what()});
        return kExitNumericError;
    } catch (const std::exception& e) {
        report_error(err, kExitFailure, "runtime", {e.what()});
        return kExitFailure;
    }
    return kExitOk;
}

std::vector<std::string> grid_cells() {
    return {
        // Component combinations.
        "T4-none", "T4-CDCR", "T4-DAR", "T4-CDCR+DAR", "T4-CDCR+CMPA", "T4-DAR+CMPA", "T4-CDCR+DAR+CMPA",
        // Component variants.
        "Mean-CDCR", "Any2-CDCR", "Strict-CDCR", "Full-CDCR",
        "CE-DAR", "Weak-only DAR", "Strong-only DAR", "Full-DAR",
        "Intra-Domain CMPA", "Intra-Modal CMPA", "Weak-only CMPA", "Strong-only CMPA", "Full-CMPA",
        // References.
        "FixMatch-M", "Supervised-only",
    };
}

std::string cell_directory(const std::string& cell) {
    std::string out;
    for (char c : cell) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') {
            out += c;
        } else if (c == '+') {
            out += "_plus_";
        } else {
            out += '_';
        }
    }
    return out;
}

int ablation_grid_command(const CommonOptions& options, std::ostream& out, std::ostream& err) {
    train::ExperimentConfig base;
    try {
        base = resolve_config(options);
    } catch (const util::SchemaError& e) {
        report_error(err, kExitConfigError, "config", e.errors());
        return kExitConfigError;
    }
    const auto cells = grid_cells();
    const std::filesystem::path root = base.output_dir;

    struct Outcome {
        std::optional<train::ExperimentReport> report;
        std::string error;
    };
    std::vector<Outcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            auto config = base;
            config.output_dir = (root / cell_directory(cells[i])).string();
            try {
                train::apply_preset(config, cells[i]);
                auto report = train::run_experiment(config, 1);
                train::write_run_directory(config.output_dir, report);
                outcomes[i].report = std::move(report);
            } catch (const std::exception& e) {
                outcomes[i].error = e.what();
                spdlog::error("grid cell {} failed: {}", cells[i], e.what());
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.jobs, cells.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::filesystem::create_directories(root);
    std::ofstream summary(root / "summary.csv", std::ios::binary);
    summary << "variant,seed,target,accuracy,status\n";
    std::size_t failures = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& o = outcomes[i];
        if (!o.report) {
            ++failures;
            std::string message = o.error;
            for (auto& c : message)
                if (c == ',' || c == '\n' || c == '"') c = ' ';
            summary << fmt::format("\"{}\",,,,failed: {}\n", cells[i], message);
            out << fmt::format("FAIL {}: {}\n", cells[i], o.error);
            continue;
        }
        for (const auto& run : o.report->runs)
            for (const auto& t : run.targets)
                summary << fmt::format("\"{}\",{},{},{},ok\n", cells[i], run.seed, t.target, t.accuracy);
        out << fmt::format("ok   {:<20} mean accuracy {:.4f}\n", cells[i], o.report->mean_accuracy);
    }
    if (failures > 0) {
        report_error(err, kExitPartialGrid, "grid", {fmt::format("{} of {} cells failed", failures, cells.size())});
        return kExitPartialGrid;
    }
    return kExitOk;
}

int diag_command(const DiagOptions& options, std::ostream& out, std::ostream& err) {
    struct Reset {
        ~Reset() { diff::testing::corrupt_backward(diff::OpKind::leaf, 0); }
    } reset;
    if (options.corrupt_kernel) {
        std::optional<diff::OpKind> kind;
        for (int k = 0; k <= static_cast<int>(diff::OpKind::sum_all); ++k) {
            const auto candidate = static_cast<diff::OpKind>(k);
            if (diff::op_name(candidate) == *options.corrupt_kernel) kind = candidate;
        }
        if (!kind || *kind == diff::OpKind::leaf) {
            report_error(err, kExitConfigError, "config", {"--corrupt-kernel: unknown kernel '" + *options.corrupt_kernel + "'"});
            return kExitConfigError;
        }
        diff::testing::corrupt_backward(*kind, static_cast<diff::Real>(options.corrupt_factor));
        out << "corrupting backward of kernel " << *options.corrupt_kernel << '\n';
    }
    const bool ok = run_diagnostics(out, options.fixtures, options.seed);
    if (!ok) {
        report_error(err, kExitNumericError, "diag", {"one or more checks failed"});
        return kExitNumericError;
    }
    return kExitOk;
}

}  // namespace ssmdg::cli
