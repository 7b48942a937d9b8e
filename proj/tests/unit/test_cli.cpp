#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include "ssmdg/cli/commands.hpp"
#include "ssmdg/cli/diagnostics.hpp"
#include "ssmdg/train/checkpoint.hpp"
#include "ssmdg/train/config.hpp"
#include "ssmdg/train/report.hpp"
#include "ssmdg/util/strict_json.hpp"

using namespace ssmdg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("ssmdg-" + tag + "-" + std::to_string(::getpid()))) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

json tiny_doc() {
    return json{{"schema_version", 1},
                {"data", {{"pool_per_class", 12}}},
                {"training", {{"steps", 6}, {"labeled_batch", 8}, {"seeds", {0}}}}};
}

fs::path write_doc(const fs::path& dir, const json& doc) {
    const auto p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::string> schema_errors(const json& doc) {
    try {
        train::config_from_json(doc);
    } catch (const util::SchemaError& e) {
        return e.errors();
    }
    return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
    for (const auto& e : errors)
        if (e.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_CASE("config schema") {
    CHECK(schema_errors(json{{"schema_version", 1}}).empty());
    CHECK(mentions(schema_errors(json::object()), "$.schema_version"));
    CHECK(mentions(schema_errors(json{{"schema_version", 2}}), "$.schema_version"));
    CHECK(mentions(schema_errors(json{{"schema_version", 1}, {"colour", "red"}}), "$.colour"));
    CHECK(mentions(schema_errors(json{{"schema_version", 1}, {"gate", {{"tua", 0.9}}}}), "$.gate.tua"));
    CHECK(mentions(schema_errors(json{{"schema_version", 1}, {"gate", {{"tau", "high"}}}}), "$.gate.tau"));
    CHECK(mentions(schema_errors(json{{"schema_version", 1}, {"gate", {{"variant", "loose"}}}}), "$.gate.variant"));
    CHECK(mentions(schema_errors(json{{"schema_version", 1}, {"variant", "Best"}}), "$.variant"));
    CHECK_THROWS(train::config_from_json(json{{"schema_version", 1}, {"gate", {{"tau", 1.0}}}}));
    CHECK_THROWS(train::config_from_json(json{{"schema_version", 1}, {"loss", {{"q", 0.0}}}}));
}

TEST_CASE("config defaults") {
    const auto c = train::config_from_json(json{{"schema_version", 1}});
    CHECK(c.tau == 0.95);
    CHECK(c.q == 0.7);
    CHECK(c.weights.lambda_cdcr == 1.0);
    CHECK(c.weights.lambda_dar == 0.1);
    CHECK(c.weights.lambda_cmpa == 0.1);
    CHECK(c.optimizer.lr == 1e-4);
    CHECK(c.optimizer.weight_decay == 1e-3);
    CHECK(c.labeled_batch == 32);
    CHECK(c.gate == gating::GateVariant::full);
}

TEST_CASE("overrides") {
    auto doc = tiny_doc();
    train::apply_overrides(doc, {"gate.variant=strict", "loss.q=0.5", "training.seeds=[3,4]"});
    const auto c = train::config_from_json(doc);
    CHECK(c.gate == gating::GateVariant::strict);
    CHECK(c.q == 0.5);
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK_THROWS_AS(train::apply_overrides(doc, {"gate.colour=red"}), util::SchemaError);
    CHECK_THROWS_AS(train::apply_overrides(doc, {"gate=1"}), util::SchemaError);
    CHECK_THROWS_AS(train::apply_overrides(doc, {"noequals"}), util::SchemaError);
}

TEST_CASE("presets") {
    train::ExperimentConfig c;
    train::apply_preset(c, "Strict-CDCR");
    CHECK(c.gate == gating::GateVariant::strict);
    CHECK(c.variant == "Strict-CDCR");
    c = {};
    train::apply_preset(c, "Intra-Modal CMPA");
    CHECK_FALSE(c.cmpa.translated);
    CHECK(c.cmpa.cross_domain);
    c = {};
    train::apply_preset(c, "Supervised-only");
    CHECK(c.weights.lambda_cdcr == 0.0);
    CHECK(c.weights.lambda_dar == 0.0);
    CHECK(c.weights.lambda_cmpa == 0.0);
    c = {};
    train::apply_preset(c, "FixMatch-M");
    CHECK(c.gate == gating::GateVariant::fused_only);
    for (const auto& cell : cli::grid_cells()) CHECK(train::is_preset(cell));
}

TEST_CASE("resolved config reparses to the same settings") {
    train::ExperimentConfig c;
    train::apply_preset(c, "CE-DAR");
    c.seeds = {7, 8};
    c.task.modality_correlation = 0.8;
    const auto again = train::config_from_json(train::to_json(c));
    CHECK(train::to_json(again) == train::to_json(c));
    CHECK(again.dar_kind == losses::DarKind::ce);
}

TEST_CASE("run command writes exactly three files and reproduces its report") {
    TempDir tmp("run");
    const auto cfg = write_doc(tmp.path, tiny_doc());
    cli::CommonOptions opts;
    opts.config_path = cfg.string();
    opts.overrides = {"gate.variant=strict"};
    opts.out_dir = (tmp.path / "a").string();
    std::ostringstream out, err;
    REQUIRE(cli::run_command(opts, out, err) == cli::kExitOk);
    std::set<std::string> files;
    for (const auto& e : fs::directory_iterator(tmp.path / "a")) files.insert(e.path().filename().string());
    CHECK(files == std::set<std::string>{"metrics.csv", "report.json", "resolved-config.json"});
    const auto resolved = json::parse(slurp(tmp.path / "a" / "resolved-config.json"));
    CHECK(resolved["gate"]["variant"] == "strict");

    // Re-running from the resolved config reproduces the run.
    cli::CommonOptions again;
    again.config_path = (tmp.path / "a" / "resolved-config.json").string();
    again.out_dir = (tmp.path / "b").string();
    REQUIRE(cli::run_command(again, out, err) == cli::kExitOk);
    CHECK(slurp(tmp.path / "a" / "metrics.csv") == slurp(tmp.path / "b" / "metrics.csv"));
    const auto ra = json::parse(slurp(tmp.path / "a" / "report.json"));
    const auto rb = json::parse(slurp(tmp.path / "b" / "report.json"));
    auto without_paths = [](json r) {
        r = train::strip_wall_clock(r);
        r["config"].erase("output_dir");
        return r.dump();
    };
    CHECK(without_paths(ra) == without_paths(rb));
    CHECK(ra.contains("wall_clock_seconds"));
    CHECK_FALSE(train::strip_wall_clock(ra).contains("wall_clock_seconds"));
}

TEST_CASE("run command exit codes") {
    TempDir tmp("codes");
    std::ostringstream out, err;
    cli::CommonOptions opts;
    opts.config_path = (tmp.path / "missing.json").string();
    CHECK(cli::run_command(opts, out, err) == cli::kExitConfigError);

    auto doc = tiny_doc();
    doc.erase("schema_version");
    opts.config_path = write_doc(tmp.path, doc).string();
    err.str("");
    CHECK(cli::run_command(opts, out, err) == cli::kExitConfigError);
    const auto record = json::parse(err.str());
    CHECK(record["exit_code"] == 2);
    CHECK(record["messages"][0].get<std::string>().find("$.schema_version") != std::string::npos);

    opts.config_path = write_doc(tmp.path, tiny_doc()).string();
    opts.overrides = {"gate.nope=1"};
    CHECK(cli::run_command(opts, out, err) == cli::kExitConfigError);
    opts.overrides = {};
    opts.seed_list = "1,x";
    CHECK(cli::run_command(opts, out, err) == cli::kExitConfigError);

    // An exploding learning rate ends in a numeric failure.
    opts.seed_list.reset();
    opts.overrides = {"optimizer.lr=1e300", "training.steps=4"};
    opts.out_dir = (tmp.path / "boom").string();
    err.str("");
    const int code = cli::run_command(opts, out, err);
    CHECK(code == cli::kExitNumericError);
}

TEST_CASE("grid cells and directories") {
    const auto cells = cli::grid_cells();
    CHECK(cells.size() == 22);
    CHECK(std::set<std::string>(cells.begin(), cells.end()).size() == cells.size());
    std::set<std::string> dirs;
    for (const auto& c : cells) dirs.insert(cli::cell_directory(c));
    CHECK(dirs.size() == cells.size());
    CHECK(cli::cell_directory("Weak-only DAR") == "Weak-only_DAR");
    CHECK(cli::cell_directory("T4-CDCR+DAR") == "T4-CDCR_plus_DAR");
}

TEST_CASE("diag passes on a clean build and names a corrupted kernel") {
    std::ostringstream out, err;
    cli::DiagOptions opts;
    opts.fixtures = 3;
    CHECK(cli::diag_command(opts, out, err) == cli::kExitOk);
    CHECK(out.str().find("max_relative_error") != std::string::npos);
    CHECK(out.str().find("FAIL") == std::string::npos);

    std::ostringstream bad_out, bad_err;
    opts.corrupt_kernel = "softmax_last_axis";
    CHECK(cli::diag_command(opts, bad_out, bad_err) == cli::kExitNumericError);
    CHECK(bad_out.str().find("FAIL") != std::string::npos);
    CHECK(bad_out.str().find("suspect kernel: softmax_last_axis") != std::string::npos);
    CHECK(diff::testing::corrupted_kernel() == diff::OpKind::leaf);

    opts.corrupt_kernel = "warp";
    CHECK(cli::diag_command(opts, bad_out, bad_err) == cli::kExitConfigError);
}

TEST_CASE("checkpoint round trip") {
    TempDir tmp("ckpt");
    train::ExperimentConfig cfg;
    auto state = train::make_train_state(cfg, 11);
    const std::vector<diff::Real> mu(32, diff::Real(0.25));
    state.bank.set(1, 3, 2, mu);
    train::save_checkpoint(tmp.path, state.model, state.bank, 17);
    const auto back = train::load_checkpoint(tmp.path);
    CHECK(back.step == 17);
    CHECK(back.bank == state.bank);
    for (const auto& p : state.model.parameters()) {
        const auto q = back.model.parameters().at(p.name()).data();
        CHECK(std::equal(p.data().begin(), p.data().end(), q.begin(), q.end()));
    }
    std::ofstream(tmp.path / "params.bin", std::ios::binary | std::ios::trunc) << "short";
    CHECK_THROWS(train::load_checkpoint(tmp.path));
}
