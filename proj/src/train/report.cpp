#include "ssmdg/train/report.hpp"

#include <fstream>

#include <fmt/format.h>

#include "ssmdg/util/strict_json.hpp"

namespace ssmdg::train {

using nlohmann::json;

namespace {

std::string cell(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string mode_name(model::ImputeMode mode) { return mode == model::ImputeMode::zero ? "zero" : "translate"; }

}  // namespace

void write_metrics_csv(std::ostream& out, const ExperimentReport& report) {
    out << kMetricsHeader << '\n';
    for (const auto& run : report.runs) {
        for (const auto& target : run.targets) {
            for (const auto& m : target.metrics) {
                out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", m.step, m.loss.sup, m.loss.cdcr, m.loss.dar,
                                   m.loss.cmpa, m.loss.total, m.utilization, cell(m.pl_accuracy), m.n_consensus,
                                   m.n_disagreement);
            }
        }
    }
}

json report_to_json(const ExperimentReport& report) {
    json runs = json::array();
    double consensus_sum = 0.0, disagreement_sum = 0.0;
    std::size_t consensus_n = 0, disagreement_n = 0;
    for (const auto& run : report.runs) {
        json targets = json::array();
        for (const auto& t : run.targets) {
            json missing = json::array();
            for (const auto& e : t.missing) {
                missing.push_back({{"modality", e.modality}, {"mode", mode_name(e.mode)}, {"accuracy", e.accuracy}});
            }
            json curve = json::array();
            for (const auto& [step, acc] : t.accuracy_curve) curve.push_back({{"step", step}, {"accuracy", acc}});
            targets.push_back({{"target", t.target},
                               {"accuracy", t.accuracy},
                               {"missing_modality", missing},
                               {"accuracy_curve", curve},
                               {"consensus_precision", optional_json(t.consensus_precision)},
                               {"disagreement_precision", optional_json(t.disagreement_precision)},
                               {"steps", t.metrics.size()}});
            if (t.consensus_precision) consensus_sum += *t.consensus_precision, ++consensus_n;
            if (t.disagreement_precision) disagreement_sum += *t.disagreement_precision, ++disagreement_n;
        }
        runs.push_back({{"seed", run.seed},
                        {"mean_accuracy", run.mean_accuracy},
                        {"targets", targets},
                        {"wall_clock_seconds", run.wall_clock_seconds}});
    }
    auto mean_or_null = [](double sum, std::size_t n) { return n ? json(sum / static_cast<double>(n)) : json(nullptr); };
    return json{
        {"variant", report.config.variant},
        {"config", to_json(report.config)},
        {"runs", runs},
        {"summary",
         {{"mean_accuracy", report.mean_accuracy},
          {"std_accuracy", report.std_accuracy},
          {"seeds", report.runs.size()},
          {"consensus_precision", mean_or_null(consensus_sum, consensus_n)},
          {"disagreement_precision", mean_or_null(disagreement_sum, disagreement_n)}}},
        {"wall_clock_seconds", report.wall_clock_seconds},
    };
}

void write_run_directory(const std::filesystem::path& dir, const ExperimentReport& report) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("resolved-config.json");
        out << to_json(report.config).dump(2) << '\n';
    }
    {
        auto out = open("metrics.csv");
        write_metrics_csv(out, report);
    }
    {
        auto out = open("report.json");
        out << report_to_json(report).dump(2) << '\n';
    }
}

json strip_wall_clock(json doc) {
    if (doc.is_object()) {
        doc.erase("wall_clock_seconds");
        for (auto& [key, value] : doc.items()) value = strip_wall_clock(value);
    } else if (doc.is_array()) {
        for (auto& value : doc) value = strip_wall_clock(value);
    }
    return doc;
}

}  // namespace ssmdg::train
