#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssmdg/model/model.hpp"

namespace ssmdg::gating {

using diff::Real;

enum class GateVariant { full, mean, any2, strict, fused_only };

std::string_view variant_name(GateVariant v);
/// Accepts "full", "mean", "any2", "strict", "fused_only" (case-insensitive).
GateVariant parse_variant(std::string_view name);

enum class GateOutcome { consensus, disagreement, rejected };

struct GateDecision {
    GateOutcome outcome = GateOutcome::rejected;
    std::optional<std::size_t> pseudo_label;

    static GateDecision consensus(std::size_t y) { return {GateOutcome::consensus, y}; }
    static GateDecision disagreement(std::size_t y) { return {GateOutcome::disagreement, y}; }
    static GateDecision rejected() { return {}; }

    bool accepted() const noexcept { return outcome != GateOutcome::rejected; }
    bool operator==(const GateDecision&) const = default;
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const Real> p);
Real max_prob(std::span<const Real> p);

/// Selects one unlabeled sample from its weak-view predictions. Confidence
/// comparisons are strict (> tau). The disagreement set is always the
/// fused-confident samples that are not in the consensus set (empty under
/// fused_only). See README for the per-variant consensus rules.
GateDecision gate_sample(const model::HeadProbs& weak, double tau, GateVariant variant);

struct GateBatch {
    std::vector<GateDecision> decisions;
    double utilization = 0.0;
    std::size_t n_consensus = 0;
    std::size_t n_disagreement = 0;

    std::vector<std::size_t> indices(GateOutcome outcome) const;
    std::vector<std::size_t> accepted_indices() const;
};

GateBatch gate_batch(std::span<const model::HeadProbs> weak, double tau, GateVariant variant);
GateBatch gate_batch(const model::BatchPredictions& weak, double tau, GateVariant variant);

}  // namespace ssmdg::gating
