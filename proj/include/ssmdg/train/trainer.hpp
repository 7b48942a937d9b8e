#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ssmdg/data/dataset.hpp"
#include "ssmdg/diff/adamw.hpp"
#include "ssmdg/gating/gating.hpp"
#include "ssmdg/losses/losses.hpp"
#include "ssmdg/model/model.hpp"
#include "ssmdg/prototypes/prototypes.hpp"
#include "ssmdg/train/config.hpp"

namespace ssmdg::train {

using diff::Real;
using diff::Tensor;

// --- batches -----------------------------------------------------------------

struct LabeledBatch {
    std::vector<Tensor> weak;  // [modality] -> [n, input_dim]
    std::vector<std::size_t> labels;
    std::vector<std::size_t> domains;
    std::vector<std::uint64_t> ids;

    std::size_t size() const { return labels.size(); }
};

struct UnlabeledBatch {
    std::vector<Tensor> weak;
    std::vector<Tensor> strong;
    std::vector<std::size_t> domains;
    std::vector<std::uint64_t> ids;

    std::size_t size() const { return ids.size(); }
};

struct Batch {
    LabeledBatch labeled;
    UnlabeledBatch unlabeled;
};

/// Draws labeled samples uniformly from the pooled labeled sets of every
/// source (without replacement when the pool is large enough), and
/// round(mu_ratio * labeled) unlabeled samples from the pooled unlabeled sets.
Batch assemble_batch(const std::vector<data::DomainDataset>& sources, const ExperimentConfig& config,
                     std::uint64_t step_seed);

// --- training ----------------------------------------------------------------

struct TrainState {
    model::Model model;
    prototypes::PrototypeBank bank;
    diff::AdamWState optimizer;
    std::size_t step = 0;
    /// Held-out domain; batches carrying it are rejected.
    std::optional<std::size_t> target_domain;
};

TrainState make_train_state(const ExperimentConfig& config, std::uint64_t init_seed);

struct StepMetrics {
    std::size_t step = 0;
    losses::LossBreakdown loss;
    double utilization = 0.0;
    std::optional<double> pl_accuracy;
    std::optional<double> consensus_accuracy;
    std::optional<double> disagreement_accuracy;
    std::size_t n_consensus = 0;
    std::size_t n_disagreement = 0;
};

class NumericError : public std::runtime_error {
public:
    NumericError(std::size_t step, const losses::LossBreakdown& breakdown);
    std::size_t step() const noexcept { return step_; }
    const losses::LossBreakdown& breakdown() const noexcept { return breakdown_; }

private:
    std::size_t step_;
    losses::LossBreakdown breakdown_;
};

/// One optimization step:
///  1. labeled weak forward, supervised loss
///  2. prototype EMA update from the detached labeled features
///  3. unlabeled weak forward and gating on detached probabilities
///  4. unlabeled strong forward
///  5. consistency loss on the consensus set
///  6. robust loss on the disagreement set
///  7. translations and prototype alignment over both sets
///  8. total, backward, AdamW
///  9. metrics; `oracle` (optional) only feeds pseudo-label accuracy
/// Terms with a zero weight are not computed. Throws NumericError on a
/// non-finite total.
StepMetrics train_step(TrainState& state, const Batch& batch, const ExperimentConfig& config,
                       const data::LabelOracle* oracle = nullptr);

/// Rows `accepted` of each view's features plus, when enabled, their
/// translations into every modality; views follow `switches.views`.
prototypes::CmpaBatch build_cmpa_batch(const model::Model& model, const std::vector<Tensor>& weak_features,
                                       const std::vector<Tensor>& strong_features,
                                       const std::vector<std::size_t>& accepted,
                                       std::vector<std::size_t> pseudo_labels, std::vector<std::size_t> domains,
                                       const prototypes::CmpaSwitches& switches);

// --- evaluation --------------------------------------------------------------

struct MissingModality {
    std::size_t modality = 0;
    model::ImputeMode mode = model::ImputeMode::zero;
};

/// Fused-head accuracy on raw inputs, optionally with one modality replaced
/// by its imputed feature.
double evaluate(const model::Model& model, const data::TestPool& pool,
                std::optional<MissingModality> missing = std::nullopt);

struct PseudoLabelStats {
    std::optional<double> accuracy;
    double utilization = 0.0;
};

/// Accuracy over accepted decisions only; utilization as in gating.
PseudoLabelStats pseudo_label_metrics(std::span<const gating::GateDecision> decisions,
                                      std::span<const std::size_t> hidden_labels);

// --- experiments -------------------------------------------------------------

struct MissingEval {
    std::size_t modality = 0;
    model::ImputeMode mode = model::ImputeMode::zero;
    double accuracy = 0.0;
};

struct TargetRun {
    std::size_t target = 0;
    double accuracy = 0.0;
    std::vector<MissingEval> missing;
    std::vector<StepMetrics> metrics;
    std::vector<std::pair<std::size_t, double>> accuracy_curve;  // (step, target accuracy)
    /// Means of the per-step set accuracies after the warm-up window.
    std::optional<double> consensus_precision;
    std::optional<double> disagreement_precision;
};

struct RunReport {
    std::uint64_t seed = 0;
    std::vector<TargetRun> targets;
    double mean_accuracy = 0.0;
    double wall_clock_seconds = 0.0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<RunReport> runs;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // population std of per-seed means
    double wall_clock_seconds = 0.0;
};

/// Trains on every domain but `target` and evaluates on `target`.
TargetRun run_target(const ExperimentConfig& config, std::uint64_t seed, std::size_t target);

/// Every (seed, target) pair, on up to `jobs` threads. Results do not depend on `jobs`.
ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t jobs = 1);

/// Mean of the per-step values after the first warmup_fraction of steps.
std::optional<double> post_warmup_mean(const std::vector<StepMetrics>& metrics, double warmup_fraction,
                                       std::optional<double> StepMetrics::*field);

}  // namespace ssmdg::train
