#pragma once

#include <span>
#include <string_view>

#include "ssmdg/diff/tensor.hpp"
#include "ssmdg/model/model.hpp"

namespace ssmdg::losses {

using diff::Real;
using diff::Tensor;

/// Probabilities are clamped from below before log/pow.
inline constexpr Real kProbFloor = Real(1e-12);

// --- per-row terms -----------------------------------------------------------

/// -log p[label] per row of a [n, C] tensor -> [n].
Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels);
/// (1 - p[label]^q) / q per row -> [n]. Requires q in (0, 1].
Tensor gce(const Tensor& probs, std::span<const std::size_t> labels, double q);

double cross_entropy(std::size_t label, std::span<const Real> p);
double gce(std::size_t label, std::span<const Real> p, double q);

// --- objective terms ---------------------------------------------------------

enum class DarKind { gce, ce };
enum class ViewSet { both, weak, strong };

std::string_view view_set_name(ViewSet v);
ViewSet parse_view_set(std::string_view name);
std::string_view dar_kind_name(DarKind k);
DarKind parse_dar_kind(std::string_view name);

/// Mean over the labeled batch of the CE summed over every head.
Tensor loss_sup(const model::BatchPredictions& labeled, std::span<const std::size_t> labels);

/// Mean over `members` (rows of the strong-view batch) of the CE summed over
/// every head against the fixed pseudo-labels. Empty set -> constant 0.
Tensor loss_cdcr(const model::BatchPredictions& strong, std::span<const std::size_t> members,
                 std::span<const std::size_t> pseudo_labels);

/// Mean over `members` of GCE (or CE) summed over heads and the selected
/// views. Gradients flow through both views. Empty set -> constant 0.
Tensor loss_dar(const model::BatchPredictions& weak, const model::BatchPredictions& strong,
                std::span<const std::size_t> members, std::span<const std::size_t> pseudo_labels, double q,
                DarKind kind = DarKind::gce, ViewSet views = ViewSet::both);

/// Per-row ||z - mu||^2 + ||z - mu_bar||^2; the targets are treated as constants.
Tensor align_pair(const Tensor& z, const Tensor& mu, const Tensor& mu_bar);

// --- total -------------------------------------------------------------------

struct ObjectiveWeights {
    double lambda_cdcr = 1.0;
    double lambda_dar = 0.1;
    double lambda_cmpa = 0.1;
};

struct LossBreakdown {
    double sup = 0.0;
    double cdcr = 0.0;
    double dar = 0.0;
    double cmpa = 0.0;
    double total = 0.0;
    std::size_t n_labeled = 0;
    std::size_t n_consensus = 0;
    std::size_t n_disagreement = 0;
};

struct ObjectiveTerms {
    Tensor sup;
    Tensor cdcr;
    Tensor dar;
    Tensor cmpa;
    std::size_t n_labeled = 0;
    std::size_t n_consensus = 0;
    std::size_t n_disagreement = 0;
};

struct Objective {
    Tensor total;
    LossBreakdown breakdown;
};

/// total = sup + l1*cdcr + l2*dar + l3*cmpa. Terms with a zero weight are left
/// out of the graph entirely.
Objective total_objective(const ObjectiveTerms& terms, const ObjectiveWeights& weights);

}  // namespace ssmdg::losses
