// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments pick
// criteria by number, e.g. `ssmdg_acceptance 1 3`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include "ssmdg/cli/commands.hpp"
#include "ssmdg/cli/diagnostics.hpp"
#include "ssmdg/data/rng.hpp"
#include "ssmdg/diff/ops.hpp"
#include "ssmdg/gating/gating.hpp"
#include "ssmdg/losses/losses.hpp"
#include "ssmdg/prototypes/prototypes.hpp"
#include "ssmdg/train/config.hpp"
#include "ssmdg/train/report.hpp"
#include "ssmdg/train/trainer.hpp"

using namespace ssmdg;
using nlohmann::json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string csv_of(const train::ExperimentReport& r) {
    std::ostringstream s;
    train::write_metrics_csv(s, r);
    return s.str();
}

std::vector<std::uint64_t> five_seeds() { return {0, 1, 2, 3, 4}; }

// --- 1 ---------------------------------------------------------------------

Verdict gradient_suite() {
    const auto t0 = Clock::now();
    const auto results = cli::loss_gradient_checks(20, 2024, 1e-4);
    const double elapsed = seconds_since(t0);
    bool ok = results.size() == 5 && elapsed < 60.0;
    std::string detail;
    for (const auto& r : results) {
        ok = ok && r.passed;
        detail += fmt::format("{}={:.2e} ", r.name, r.max_error);
    }
    return {ok, fmt::format("{}over 20 fixtures each, tol 1e-4; {:.1f}s (limit 60s)", detail, elapsed)};
}

// --- 2 ---------------------------------------------------------------------

using Dist = std::vector<diff::Real>;

Dist peaked(double top, std::size_t at) {
    Dist p(3);
    p[at] = top;
    p[(at + 1) % 3] = 0.6 * (1 - top);
    p[(at + 2) % 3] = 0.4 * (1 - top);
    return p;
}

std::size_t top_class(const Dist& p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.size(); ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

// Brute force: enumerate every class and ask which heads vouch for it.
gating::GateDecision brute_force(const model::HeadProbs& h, double tau, gating::GateVariant v) {
    std::vector<const Dist*> views;
    for (const auto& u : h.unimodal) views.push_back(&u);
    views.push_back(&h.fused);
    const std::size_t fused_index = views.size() - 1;
    const std::size_t y = top_class(h.fused);
    auto vouches = [&](std::size_t view, std::size_t c) { return top_class(*views[view]) == c && (*views[view])[c] > tau; };
    const bool fused_ok = vouches(fused_index, y);
    std::optional<std::size_t> label;
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t support = 0, unimodal_support = 0;
        for (std::size_t view = 0; view < views.size(); ++view) {
            support += vouches(view, c);
            unimodal_support += view != fused_index && vouches(view, c);
        }
        const bool fused_c = vouches(fused_index, c);
        switch (v) {
            case gating::GateVariant::full:
                if (fused_c && unimodal_support >= 1) label = c;
                break;
            case gating::GateVariant::strict:
                if (support == views.size()) label = c;
                break;
            case gating::GateVariant::any2:
                if (c == y && support >= 2) label = c;
                break;
            case gating::GateVariant::fused_only:
                if (fused_c) label = c;
                break;
            case gating::GateVariant::mean: break;
        }
    }
    if (v == gating::GateVariant::mean) {
        Dist avg(3, 0.0);
        std::size_t used = 0;
        for (const auto* p : views) {
            if ((*p)[top_class(*p)] <= tau) continue;
            for (std::size_t c = 0; c < 3; ++c) avg[c] += (*p)[c];
            ++used;
        }
        if (used) {
            for (auto& a : avg) a /= static_cast<double>(used);
            if (avg[top_class(avg)] > tau) label = top_class(avg);
        }
    }
    if (label) return gating::GateDecision::consensus(*label);
    if (fused_ok && v != gating::GateVariant::fused_only) return gating::GateDecision::disagreement(y);
    return gating::GateDecision::rejected();
}

Verdict gate_oracle() {
    const auto t0 = Clock::now();
    const double maxes[] = {0.90, 0.94, 0.96, 0.99};
    const gating::GateVariant variants[] = {gating::GateVariant::full, gating::GateVariant::mean, gating::GateVariant::any2,
                                            gating::GateVariant::strict, gating::GateVariant::fused_only};
    std::size_t total = 0, agree = 0;
    for (double a : maxes)
        for (double b : maxes)
            for (double f : maxes)
                for (std::size_t placement = 0; placement < 27; ++placement) {
                    const model::HeadProbs h{{peaked(a, placement % 3), peaked(b, placement / 3 % 3)}, peaked(f, placement / 9)};
                    for (auto v : variants) {
                        ++total;
                        agree += gating::gate_sample(h, 0.95, v) == brute_force(h, 0.95, v);
                    }
                }
    const double elapsed = seconds_since(t0);
    return {agree == total && elapsed < 5.0,
            fmt::format("{}/{} cases agree (4 maxes, 27 placements, 5 variants); {:.3f}s (limit 5s)", agree, total, elapsed)};
}

// --- 3 ---------------------------------------------------------------------

Verdict gce_analytics() {
    const auto gce2 = [](double p, double q) { return losses::gce(0, Dist{p, 1 - p}, q); };
    const auto ce2 = [](double p) { return losses::cross_entropy(0, Dist{p, 1 - p}); };
    const long double oracle = (1.0L - std::exp(0.7L * std::log(0.9L))) / 0.7L;
    const double got = gce2(0.9, 0.7);
    bool ok = std::abs(got - static_cast<double>(oracle)) <= 1e-6;
    for (double p : {0.1, 0.25, 0.5, 0.9, 0.99, 1.0}) ok = ok && gce2(p, 1.0) == 1.0 - p;
    double worst_ce = 0;
    for (double p : {0.1, 0.5, 0.9, 0.99}) worst_ce = std::max(worst_ce, std::abs(gce2(p, 1e-3) - ce2(p)));
    ok = ok && worst_ce < 5e-3;
    bool monotone = true;
    for (int i = 1; i < 100; ++i) monotone = monotone && gce2((i + 1) / 100.0, 0.7) < gce2(i / 100.0, 0.7);
    ok = ok && monotone;
    return {ok, fmt::format("gce(0.9,0.7)={:.8f} vs extended-precision oracle {:.8f} (listed literal 0.101576 "
                            "disagrees with its own formula); max|gce(p,1e-3)-CE|={:.2e}; monotone={}",
                            got, static_cast<double>(oracle), worst_ce, monotone)};
}

// --- 4 ---------------------------------------------------------------------

Verdict ema_closed_form() {
    double worst = 0;
    for (double alpha : {0.5, 0.9, 0.99}) {
        prototypes::PrototypeBank bank({4, 4}, 2, 2, alpha);
        const std::vector<diff::Real> mu0{0.5, -1.0, 2.0, 0.0}, b{1.5, 3.0, -2.0, 0.25};
        bank.set(0, 1, 1, mu0);
        for (int n = 0; n < 10; ++n) {
            const prototypes::Observation o{0, 1, 1, b};
            prototypes::ema_update(bank, std::span<const prototypes::Observation>(&o, 1), alpha);
        }
        const long double an = std::pow(static_cast<long double>(alpha), 10);
        for (std::size_t j = 0; j < 4; ++j) {
            const long double want = an * mu0[j] + (1 - an) * b[j];
            worst = std::max(worst, static_cast<double>(std::abs(bank.cell(0, 1, 1)[j] - want)));
        }
    }
    return {worst <= 1e-10, fmt::format("max deviation {:.2e} over alpha in {{0.5,0.9,0.99}}, n=10 (tol 1e-10)", worst)};
}

// --- 5 and 9 share the grid runs -------------------------------------------

struct GridRun {
    int code = -1;
    fs::path root;
};

GridRun run_grid(const fs::path& root, std::size_t jobs) {
    fs::create_directories(root);
    const json doc{{"schema_version", 1},
                   {"output_dir", root.string()},
                   {"data", {{"pool_per_class", 20}}},
                   {"training", {{"steps", 40}, {"labeled_batch", 16}, {"seeds", {0}}}}};
    const auto cfg = root / "grid-config.json";
    std::ofstream(cfg) << doc.dump(2);
    cli::CommonOptions opts;
    opts.config_path = cfg.string();
    opts.jobs = jobs;
    std::ostringstream out, err;
    return {cli::ablation_grid_command(opts, out, err), root};
}

json comparable(const fs::path& report) {
    auto r = train::strip_wall_clock(json::parse(slurp(report)));
    r["config"].erase("output_dir");
    return r;
}

Verdict determinism(const fs::path& scratch, const GridRun& serial) {
    const auto t0 = Clock::now();
    train::ExperimentConfig cfg;
    cfg.seeds = {0};
    const auto a = csv_of(train::run_experiment(cfg, 1));
    const auto b = csv_of(train::run_experiment(cfg, 1));
    const bool same_csv = a == b && a.size() > 1000;

    const auto parallel = run_grid(scratch / "grid-jobs4", 4);
    std::size_t cells = 0, identical = 0;
    for (const auto& cell : cli::grid_cells()) {
        const auto dir = cli::cell_directory(cell);
        ++cells;
        const auto p1 = serial.root / dir, p4 = parallel.root / dir;
        if (!fs::exists(p1 / "metrics.csv") || !fs::exists(p4 / "metrics.csv")) continue;
        identical += slurp(p1 / "metrics.csv") == slurp(p4 / "metrics.csv") &&
                     comparable(p1 / "report.json") == comparable(p4 / "report.json");
    }
    const bool ok = same_csv && serial.code == 0 && parallel.code == 0 && identical == cells;
    return {ok, fmt::format("default config 2000 steps twice: metrics.csv {} ({} bytes); grid --jobs 1 vs 4: "
                            "{}/{} cells identical; {:.0f}s",
                            same_csv ? "byte-identical" : "DIFFERS", a.size(), identical, cells, seconds_since(t0))};
}

Verdict grid_integrity(const GridRun& serial) {
    const std::vector<std::string> table4{"T4-none",      "T4-CDCR",     "T4-DAR",          "T4-CDCR+DAR",
                                          "T4-CDCR+CMPA", "T4-DAR+CMPA", "T4-CDCR+DAR+CMPA"};
    const std::vector<std::string> table5{"Mean-CDCR",         "Any2-CDCR",        "Strict-CDCR",    "Full-CDCR",
                                          "CE-DAR",            "Weak-only DAR",    "Strong-only DAR", "Full-DAR",
                                          "Intra-Domain CMPA", "Intra-Modal CMPA", "Weak-only CMPA", "Strong-only CMPA",
                                          "Full-CMPA"};
    std::size_t complete4 = 0, complete5 = 0;
    std::set<std::string> distinct5;
    auto complete = [&](const std::string& cell) {
        const auto dir = serial.root / cli::cell_directory(cell);
        std::set<std::string> files;
        if (!fs::exists(dir)) return false;
        for (const auto& e : fs::directory_iterator(dir)) files.insert(e.path().filename().string());
        if (files != std::set<std::string>{"metrics.csv", "report.json", "resolved-config.json"}) return false;
        const auto r = json::parse(slurp(dir / "report.json"));
        return r["runs"].size() == 1 && r["runs"][0]["targets"].size() == 3;
    };
    for (const auto& c : table4) complete4 += complete(c);
    for (const auto& c : table5) {
        if (!complete(c)) continue;
        ++complete5;
        auto cfg = json::parse(slurp(serial.root / cli::cell_directory(c) / "resolved-config.json"));
        cfg.erase("variant");
        cfg.erase("output_dir");
        distinct5.insert(cfg.dump());
    }
    std::size_t summary_rows = 0;
    {
        std::ifstream in(serial.root / "summary.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) summary_rows += line.size() > 3 && line.substr(line.size() - 3) == ",ok";
    }
    const std::size_t expected_rows = cli::grid_cells().size() * 3;

    // Intra-Modal identity on a shared fixture: full alignment loss minus the
    // translated-feature terms, computed here coordinate by coordinate.
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto fx = cli::make_gradient_fixture(seed);
        fx.cmpa = {};
        const double full = cli::evaluate_term(fx, cli::LossTerm::cmpa).item();
        fx.cmpa.translated = false;
        const double intra = cli::evaluate_term(fx, cli::LossTerm::cmpa).item();

        const auto& model = fx.model;
        const std::size_t M = fx.weak.size();
        double translated = 0;
        std::size_t contributing = 0;
        for (std::size_t a = 0; a < fx.accepted.size(); ++a) {
            const std::size_t row = fx.accepted[a];
            const std::size_t c = fx.accepted_labels[a], k = fx.domains[row];
            bool any = false;
            for (const auto* inputs : {&fx.weak, &fx.strong}) {
                std::map<std::size_t, diff::Tensor> feats;
                for (std::size_t m = 0; m < M; ++m)
                    feats.emplace(m, diff::select_rows(model.encode(m, (*inputs)[m]), std::vector<std::size_t>{row}));
                for (std::size_t m = 0; m < M; ++m) {
                    const auto translated_m = model.translate_into(m, feats);
                    const auto t = translated_m.data();
                    std::vector<std::vector<double>> targets;
                    if (fx.bank.initialized(m, c, k)) {
                        const auto cell = fx.bank.cell(m, c, k);
                        targets.emplace_back(cell.begin(), cell.end());
                    }
                    std::vector<double> avg(fx.bank.dim(m), 0.0);
                    std::size_t n = 0;
                    for (std::size_t other = 0; other < fx.bank.num_domains(); ++other) {
                        if (other == k || !fx.bank.initialized(m, c, other)) continue;
                        const auto cell = fx.bank.cell(m, c, other);
                        for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += cell[j];
                        ++n;
                    }
                    if (n) {
                        for (auto& v : avg) v /= static_cast<double>(n);
                        targets.push_back(avg);
                    }
                    any = any || !targets.empty();
                    for (const auto& target : targets)
                        for (std::size_t j = 0; j < target.size(); ++j) translated += (t[j] - target[j]) * (t[j] - target[j]);
                }
            }
            contributing += any;
        }
        if (contributing) translated /= static_cast<double>(contributing);
        worst = std::max(worst, std::abs(intra - (full - translated)));
    }

    const bool ok = serial.code == 0 && complete4 == 7 && complete5 == table5.size() && summary_rows == expected_rows &&
                    worst <= 1e-9;
    return {ok, fmt::format("component table {}/7 complete; variant table {}/{} rows complete ({} distinct settings); "
                            "summary ok rows {}/{}; Intra-Modal identity max deviation {:.2e} (tol 1e-9)",
                            complete4, complete5, table5.size(), distinct5.size(), summary_rows, expected_rows, worst)};
}

// --- 6, 7, 8 -----------------------------------------------------------------

struct VariantRun {
    train::ExperimentReport report;
    double seconds = 0;
};

VariantRun run_variant(const std::string& preset) {
    train::ExperimentConfig cfg;
    train::apply_preset(cfg, preset);
    cfg.seeds = five_seeds();
    const auto t0 = Clock::now();
    VariantRun out{train::run_experiment(cfg, 1), 0};
    out.seconds = seconds_since(t0);
    return out;
}

Verdict generalization(const VariantRun& full, const VariantRun& sup, const VariantRun& fixmatch) {
    const double f = full.report.mean_accuracy, s = sup.report.mean_accuracy, x = fixmatch.report.mean_accuracy;
    const double slowest_run = std::max({full.seconds, sup.seconds, fixmatch.seconds}) / 15.0;
    const bool ok = f >= s + 0.05 && f > x && slowest_run < 1800;
    return {ok, fmt::format("Full {:.4f}±{:.4f}, Supervised-only {:.4f}±{:.4f}, FixMatch-M {:.4f}±{:.4f}; need Full >= "
                            "Supervised+0.05 ({:.4f}) and > FixMatch-M; {:.1f}s per run",
                            f, full.report.std_accuracy, s, sup.report.std_accuracy, x, fixmatch.report.std_accuracy,
                            s + 0.05, slowest_run)};
}

Verdict missing_modality() {
    train::ExperimentConfig cfg;
    cfg.task.modality_correlation = 0.8;
    cfg.seeds = five_seeds();
    cfg.evaluate_missing = true;
    const auto report = train::run_experiment(cfg, 1);
    std::map<std::pair<std::size_t, model::ImputeMode>, std::pair<double, std::size_t>> acc;
    for (const auto& run : report.runs)
        for (const auto& t : run.targets)
            for (const auto& m : t.missing) {
                auto& [sum, n] = acc[{m.modality, m.mode}];
                sum += m.accuracy;
                ++n;
            }
    bool ok = !acc.empty();
    std::string detail;
    for (std::size_t m = 0; m < cfg.task.num_modalities; ++m) {
        const auto& z = acc[{m, model::ImputeMode::zero}];
        const auto& t = acc[{m, model::ImputeMode::translate}];
        const double zero = z.first / std::max<std::size_t>(1, z.second);
        const double tr = t.first / std::max<std::size_t>(1, t.second);
        ok = ok && z.second == 15 && t.second == 15 && tr >= zero;
        detail += fmt::format("modality {} missing: translate {:.4f} vs zero-fill {:.4f}; ", m, tr, zero);
    }
    return {ok, detail + "rho=0.8, 5 seeds"};
}

Verdict filtering_precision(const VariantRun& full) {
    double cons = 0, dis = 0;
    std::size_t nc = 0, nd = 0;
    for (const auto& run : full.report.runs)
        for (const auto& t : run.targets) {
            if (t.consensus_precision) cons += *t.consensus_precision, ++nc;
            if (t.disagreement_precision) dis += *t.disagreement_precision, ++nd;
        }
    if (nc == 0 || nd == 0) return {false, fmt::format("no post-warm-up samples (consensus {}, disagreement {})", nc, nd)};
    cons /= static_cast<double>(nc);
    dis /= static_cast<double>(nd);
    return {cons >= dis, fmt::format("Full, 5 seeds, after 30% warm-up: consensus {:.4f} ({} runs) vs disagreement "
                                     "{:.4f} ({} runs)",
                                     cons, nc, dis, nd)};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
    auto want = [&](int n) { return wanted.empty() || wanted.count(n) > 0; };

    const fs::path scratch = fs::temp_directory_path() / fmt::format("ssmdg-acceptance-{}", ::getpid());
    fs::remove_all(scratch);

    std::map<int, Verdict> verdicts;
    auto record = [&](int n, const std::string& title, const std::function<Verdict()>& fn) {
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        std::printf("%s  [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", n, title.c_str(), v.detail.c_str());
        std::fflush(stdout);
        verdicts[n] = v;
    };

    if (want(1)) record(1, "gradient suite", gradient_suite);
    if (want(2)) record(2, "gate oracle", gate_oracle);
    if (want(3)) record(3, "GCE analytics", gce_analytics);
    if (want(4)) record(4, "EMA closed form", ema_closed_form);

    std::optional<GridRun> grid;
    if (want(5) || want(9)) grid = run_grid(scratch / "grid-jobs1", 1);
    if (want(5)) record(5, "determinism", [&] { return determinism(scratch, *grid); });

    if (want(6) || want(8)) {
        std::optional<VariantRun> full, sup, fixmatch;
        try {
            full = run_variant("Full");
            if (want(6)) {
                sup = run_variant("Supervised-only");
                fixmatch = run_variant("FixMatch-M");
            }
        } catch (const std::exception& e) {
            spdlog::error("training runs failed: {}", e.what());
        }
        if (want(6))
            record(6, "synthetic generalization", [&] {
                if (!full || !sup || !fixmatch) return Verdict{false, "training runs failed"};
                return generalization(*full, *sup, *fixmatch);
            });
        if (want(7)) record(7, "missing-modality ordering", missing_modality);
        if (want(8))
            record(8, "filtering precision", [&] {
                if (!full) return Verdict{false, "training runs failed"};
                return filtering_precision(*full);
            });
    } else if (want(7)) {
        record(7, "missing-modality ordering", missing_modality);
    }
    if (want(9)) record(9, "ablation grid integrity", [&] { return grid_integrity(*grid); });

    fs::remove_all(scratch);
    std::size_t passed = 0;
    for (const auto& [n, v] : verdicts) passed += v.pass;
    std::printf("%zu/%zu criteria passed\n", passed, verdicts.size());
    return passed == verdicts.size() ? 0 : 1;
}
