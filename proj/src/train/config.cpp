#include "ssmdg/train/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "ssmdg/data/io.hpp"
#include "ssmdg/util/strict_json.hpp"

namespace ssmdg::train {

using nlohmann::json;

void ExperimentConfig::validate() const {
    std::vector<std::string> errors;
    auto check = [&](bool ok, const std::string& path, const std::string& message) {
        if (!ok) errors.push_back("$." + path + ": " + message);
    };
    try {
        task.validate();
    } catch (const std::exception& e) {
        errors.push_back(std::string("$.task: ") + e.what());
    }
    check(label_fraction >= 0.0 && label_fraction <= 1.0, "data.label_fraction", "must lie in [0, 1]");
    check(label_fraction > 0.0 || labels_per_class > 0, "data.labels_per_class", "must be positive");
    check(pool_per_class > 0, "data.pool_per_class", "must be positive");
    check(label_fraction > 0.0 || labels_per_class <= pool_per_class, "data.labels_per_class",
          "exceeds data.pool_per_class");
    check(feature_dims.size() == task.num_modalities, "model.feature_dims", "needs one entry per modality");
    for (auto d : feature_dims) check(d > 0, "model.feature_dims", "entries must be positive");
    check(encoder_hidden > 0, "model.encoder_hidden", "must be positive");
    check(translator_hidden > 0, "model.translator_hidden", "must be positive");
    check(tau > 0.0 && tau < 1.0, "gate.tau", "must lie in (0, 1)");
    check(q > 0.0 && q <= 1.0, "loss.q", "must lie in (0, 1]");
    check(weights.lambda_cdcr >= 0.0, "loss.lambda_cdcr", "must be non-negative");
    check(weights.lambda_dar >= 0.0, "loss.lambda_dar", "must be non-negative");
    check(weights.lambda_cmpa >= 0.0, "loss.lambda_cmpa", "must be non-negative");
    check(alpha >= 0.0 && alpha < 1.0, "prototypes.alpha", "must lie in [0, 1)");
    check(optimizer.lr > 0.0, "optimizer.lr", "must be positive");
    check(optimizer.weight_decay >= 0.0, "optimizer.weight_decay", "must be non-negative");
    check(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0, "optimizer.beta1", "must lie in [0, 1)");
    check(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0, "optimizer.beta2", "must lie in [0, 1)");
    check(optimizer.eps > 0.0, "optimizer.eps", "must be positive");
    check(labeled_batch > 0, "training.labeled_batch", "must be positive");
    check(mu_ratio >= 0.0 && std::isfinite(mu_ratio), "training.mu_ratio", "must be non-negative");
    check(steps > 0, "training.steps", "must be positive");
    check(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "training.warmup_fraction", "must lie in [0, 1)");
    check(!seeds.empty(), "training.seeds", "must not be empty");
    for (auto t : targets) check(t < task.num_domains, "training.targets", "domain " + std::to_string(t) + " out of range");
    if (!errors.empty()) throw util::SchemaError(std::move(errors));
}

data::LabelBudget ExperimentConfig::label_budget() const {
    return label_fraction > 0.0 ? data::LabelBudget::fraction(label_fraction) : data::LabelBudget::count(labels_per_class);
}

model::ModelConfig ExperimentConfig::model_config(std::uint64_t init_seed) const {
    model::ModelConfig m;
    m.num_modalities = task.num_modalities;
    m.input_dims = task.input_dims;
    m.feature_dims = feature_dims;
    m.encoder_hidden = encoder_hidden;
    m.translator_hidden = translator_hidden;
    m.num_classes = task.num_classes;
    m.init_seed = init_seed;
    return m;
}

std::size_t ExperimentConfig::unlabeled_batch() const {
    return static_cast<std::size_t>(std::llround(mu_ratio * static_cast<double>(labeled_batch)));
}

std::vector<std::size_t> ExperimentConfig::target_domains() const {
    if (!targets.empty()) return targets;
    std::vector<std::size_t> all(task.num_domains);
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return all;
}

// --- presets -----------------------------------------------------------------

namespace {

using Preset = std::function<void(ExperimentConfig&)>;

void set_lambdas(ExperimentConfig& c, bool cdcr, bool dar, bool cmpa) {
    if (!cdcr) c.weights.lambda_cdcr = 0.0;
    if (!dar) c.weights.lambda_dar = 0.0;
    if (!cmpa) c.weights.lambda_cmpa = 0.0;
}

const std::vector<std::pair<std::string, Preset>>& presets() {
    static const std::vector<std::pair<std::string, Preset>> table = {
        {"Full", [](ExperimentConfig&) {}},
        // Component combinations; a disabled component has its weight zeroed.
        {"T4-none", [](ExperimentConfig& c) { set_lambdas(c, false, false, false); }},
        {"T4-CDCR", [](ExperimentConfig& c) { set_lambdas(c, true, false, false); }},
        {"T4-DAR", [](ExperimentConfig& c) { set_lambdas(c, false, true, false); }},
        {"T4-CDCR+DAR", [](ExperimentConfig& c) { set_lambdas(c, true, true, false); }},
        {"T4-CDCR+CMPA", [](ExperimentConfig& c) { set_lambdas(c, true, false, true); }},
        {"T4-DAR+CMPA", [](ExperimentConfig& c) { set_lambdas(c, false, true, true); }},
        {"T4-CDCR+DAR+CMPA", [](ExperimentConfig& c) { set_lambdas(c, true, true, true); }},
        // Component variants.
        {"Mean-CDCR", [](ExperimentConfig& c) { c.gate = gating::GateVariant::mean; }},
        {"Any2-CDCR", [](ExperimentConfig& c) { c.gate = gating::GateVariant::any2; }},
        {"Strict-CDCR", [](ExperimentConfig& c) { c.gate = gating::GateVariant::strict; }},
        {"CE-DAR", [](ExperimentConfig& c) { c.dar_kind = losses::DarKind::ce; }},
        {"Weak-only DAR", [](ExperimentConfig& c) { c.dar_views = losses::ViewSet::weak; }},
        {"Strong-only DAR", [](ExperimentConfig& c) { c.dar_views = losses::ViewSet::strong; }},
        {"Intra-Domain CMPA", [](ExperimentConfig& c) { c.cmpa.cross_domain = false; }},
        {"Intra-Modal CMPA", [](ExperimentConfig& c) { c.cmpa.translated = false; }},
        {"Weak-only CMPA", [](ExperimentConfig& c) { c.cmpa.views = losses::ViewSet::weak; }},
        {"Strong-only CMPA", [](ExperimentConfig& c) { c.cmpa.views = losses::ViewSet::strong; }},
        // The per-component "Full" rows are the full method under another name.
        {"Full-CDCR", [](ExperimentConfig&) {}},
        {"Full-DAR", [](ExperimentConfig&) {}},
        {"Full-CMPA", [](ExperimentConfig&) {}},
        // References.
        {"FixMatch-M",
         [](ExperimentConfig& c) {
             c.gate = gating::GateVariant::fused_only;
             set_lambdas(c, true, false, false);
         }},
        {"Supervised-only", [](ExperimentConfig& c) { set_lambdas(c, false, false, false); }},
    };
    return table;
}

}  // namespace

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& [name, fn] : presets()) out.push_back(name);
    return out;
}

bool is_preset(const std::string& name) {
    for (const auto& [n, fn] : presets())
        if (n == name) return true;
    return false;
}

void apply_preset(ExperimentConfig& config, const std::string& name) {
    for (const auto& [n, fn] : presets()) {
        if (n == name) {
            fn(config);
            config.variant = name;
            return;
        }
    }
    throw util::SchemaError({"$.variant: unknown preset '" + name + "'"});
}

// --- JSON --------------------------------------------------------------------

json to_json(const ExperimentConfig& c) {
    json task;
    data::to_json(task, c.task);
    return json{
        {"schema_version", kSchemaVersion},
        {"variant", c.variant},
        {"output_dir", c.output_dir},
        {"task", task},
        {"data",
         {{"labels_per_class", c.labels_per_class},
          {"label_fraction", c.label_fraction},
          {"pool_per_class", c.pool_per_class}}},
        {"model",
         {{"feature_dims", c.feature_dims},
          {"encoder_hidden", c.encoder_hidden},
          {"translator_hidden", c.translator_hidden}}},
        {"gate", {{"variant", std::string(gating::variant_name(c.gate))}, {"tau", c.tau}}},
        {"loss",
         {{"q", c.q},
          {"lambda_cdcr", c.weights.lambda_cdcr},
          {"lambda_dar", c.weights.lambda_dar},
          {"lambda_cmpa", c.weights.lambda_cmpa},
          {"dar_kind", std::string(losses::dar_kind_name(c.dar_kind))},
          {"dar_views", std::string(losses::view_set_name(c.dar_views))}}},
        {"prototypes",
         {{"alpha", c.alpha},
          {"cross_domain", c.cmpa.cross_domain},
          {"translated", c.cmpa.translated},
          {"views", std::string(losses::view_set_name(c.cmpa.views))}}},
        {"optimizer",
         {{"lr", c.optimizer.lr},
          {"weight_decay", c.optimizer.weight_decay},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"eps", c.optimizer.eps}}},
        {"training",
         {{"labeled_batch", c.labeled_batch},
          {"mu_ratio", c.mu_ratio},
          {"steps", c.steps},
          {"eval_interval", c.eval_interval},
          {"warmup_fraction", c.warmup_fraction},
          {"seeds", c.seeds},
          {"targets", c.targets}}},
        {"evaluation", {{"missing_modality", c.evaluate_missing}}},
    };
}

namespace {

template <typename Enum, typename Parse>
void enum_field(util::JsonReader& r, const std::string& key, Enum& out, Parse parse) {
    std::string name;
    r.field(key, name);
    if (name.empty()) return;
    try {
        out = parse(name);
    } catch (const std::invalid_argument& e) {
        r.error(key, e.what());
    }
}

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
    std::vector<std::string> errors;
    util::JsonReader root(doc, "$", errors);
    ExperimentConfig c;

    int version = 0;
    root.field("schema_version", version, true);
    if (root.has("schema_version") && version != kSchemaVersion && errors.empty()) {
        root.error("schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                                         std::to_string(kSchemaVersion) + ")");
    }

    std::string variant = c.variant;
    root.field("variant", variant);
    if (is_preset(variant)) {
        apply_preset(c, variant);
    } else {
        root.error("variant", "unknown preset '" + variant + "'");
    }
    root.field("output_dir", c.output_dir);

    if (root.has("task")) {
        try {
            data::from_json(doc.at("task"), c.task);
        } catch (const util::SchemaError& e) {
            for (auto msg : e.errors()) errors.push_back("$.task" + msg.substr(1));
        }
    }
    root.child("task");  // marks the key as known

    auto d = root.child("data");
    d.field("labels_per_class", c.labels_per_class);
    d.field("label_fraction", c.label_fraction);
    d.field("pool_per_class", c.pool_per_class);
    d.finish();

    auto m = root.child("model");
    m.field("feature_dims", c.feature_dims);
    m.field("encoder_hidden", c.encoder_hidden);
    m.field("translator_hidden", c.translator_hidden);
    m.finish();

    auto g = root.child("gate");
    enum_field(g, "variant", c.gate, gating::parse_variant);
    g.field("tau", c.tau);
    g.finish();

    auto l = root.child("loss");
    l.field("q", c.q);
    l.field("lambda_cdcr", c.weights.lambda_cdcr);
    l.field("lambda_dar", c.weights.lambda_dar);
    l.field("lambda_cmpa", c.weights.lambda_cmpa);
    enum_field(l, "dar_kind", c.dar_kind, losses::parse_dar_kind);
    enum_field(l, "dar_views", c.dar_views, losses::parse_view_set);
    l.finish();

    auto p = root.child("prototypes");
    p.field("alpha", c.alpha);
    p.field("cross_domain", c.cmpa.cross_domain);
    p.field("translated", c.cmpa.translated);
    enum_field(p, "views", c.cmpa.views, losses::parse_view_set);
    p.finish();

    auto o = root.child("optimizer");
    o.field("lr", c.optimizer.lr);
    o.field("weight_decay", c.optimizer.weight_decay);
    o.field("beta1", c.optimizer.beta1);
    o.field("beta2", c.optimizer.beta2);
    o.field("eps", c.optimizer.eps);
    o.finish();

    auto t = root.child("training");
    t.field("labeled_batch", c.labeled_batch);
    t.field("mu_ratio", c.mu_ratio);
    t.field("steps", c.steps);
    t.field("eval_interval", c.eval_interval);
    t.field("warmup_fraction", c.warmup_fraction);
    t.field("seeds", c.seeds);
    t.field("targets", c.targets);
    t.finish();

    auto e = root.child("evaluation");
    e.field("missing_modality", c.evaluate_missing);
    e.finish();

    root.finish();
    if (!errors.empty()) throw util::SchemaError(std::move(errors));
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw util::SchemaError({"$: cannot open config file '" + path + "'"});
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw util::SchemaError({std::string("$: invalid JSON (") + e.what() + ")"});
    }
    return config_from_json(doc);
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
    static const json known = to_json(ExperimentConfig{});
    std::vector<std::string> errors;
    for (const auto& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            errors.push_back("--set " + item + ": expected KEY=VALUE");
            continue;
        }
        const std::string key = item.substr(0, eq);
        const std::string raw = item.substr(eq + 1);

        std::vector<std::string> parts;
        std::stringstream ss(key);
        for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);

        const json* schema = &known;
        bool valid = true;
        for (const auto& part : parts) {
            if (!schema->is_object() || !schema->contains(part)) {
                valid = false;
                break;
            }
            schema = &schema->at(part);
        }
        if (!valid || schema->is_object()) {
            errors.push_back("$." + key + ": unknown key");
            continue;
        }

        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;

        if (!doc.is_object()) doc = json::object();
        json* node = &doc;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            json& next = (*node)[parts[i]];
            if (next.is_null()) next = json::object();
            node = &next;
        }
        (*node)[parts.back()] = value;
    }
    if (!errors.empty()) throw util::SchemaError(std::move(errors));
}

}  // namespace ssmdg::train
