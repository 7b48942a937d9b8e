#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssmdg/data/dataset.hpp"
#include "ssmdg/data/task.hpp"
#include "ssmdg/diff/adamw.hpp"
#include "ssmdg/gating/gating.hpp"
#include "ssmdg/losses/losses.hpp"
#include "ssmdg/model/model.hpp"
#include "ssmdg/prototypes/prototypes.hpp"

namespace ssmdg::train {

inline constexpr int kSchemaVersion = 1;

struct ExperimentConfig {
    std::string variant = "Full";
    std::string output_dir = "runs/default";

    data::TaskSpec task;
    std::size_t labels_per_class = 5;
    double label_fraction = 0.0;  // used instead of labels_per_class when > 0
    std::size_t pool_per_class = 60;

    std::vector<std::size_t> feature_dims{32, 32};
    std::size_t encoder_hidden = 64;
    std::size_t translator_hidden = 64;

    double tau = 0.95;
    double q = 0.7;
    losses::ObjectiveWeights weights;
    double alpha = 0.9;
    diff::AdamWHyper optimizer;

    std::size_t labeled_batch = 32;
    double mu_ratio = 1.0;
    std::size_t steps = 2000;
    std::size_t eval_interval = 0;  // 0: evaluate only after the last step
    double warmup_fraction = 0.3;   // pseudo-label precision summaries skip this prefix

    gating::GateVariant gate = gating::GateVariant::full;
    losses::DarKind dar_kind = losses::DarKind::gce;
    losses::ViewSet dar_views = losses::ViewSet::both;
    prototypes::CmpaSwitches cmpa;

    std::vector<std::uint64_t> seeds{0};
    std::vector<std::size_t> targets;  // empty: every domain in turn
    bool evaluate_missing = false;

    void validate() const;
    data::LabelBudget label_budget() const;
    model::ModelConfig model_config(std::uint64_t init_seed) const;
    std::size_t unlabeled_batch() const;
    std::vector<std::size_t> target_domains() const;
};

/// Named presets: the ablation rows and the two reference baselines.
std::vector<std::string> preset_names();
bool is_preset(const std::string& name);
/// Applies the named preset on top of `config` and records its name.
void apply_preset(ExperimentConfig& config, const std::string& name);

nlohmann::json to_json(const ExperimentConfig& config);
/// Strict parse: "schema_version" is mandatory, unknown keys are rejected,
/// absent keys keep their defaults. A preset named by "variant" is applied to
/// the defaults before the remaining keys are read. Throws util::SchemaError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);

/// Applies "dotted.key=value" overrides to a raw config document. The key
/// must name a known setting; the value is parsed as JSON, falling back to a
/// plain string. Throws util::SchemaError.
void apply_overrides(nlohmann::json& doc, const std::vector<std::string>& overrides);

}  // namespace ssmdg::train
