#include "ssmdg/losses/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ssmdg/diff/ops.hpp"

namespace ssmdg::losses {

namespace ops = ssmdg::diff;

namespace {

void check_labels(const Tensor& probs, std::span<const std::size_t> labels, const char* who) {
    if (probs.rank() != 2) throw diff::ShapeError(std::string(who) + ": expected [n, C] probabilities");
    if (labels.size() != probs.rows()) {
        throw diff::ShapeError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                               std::to_string(probs.rows()) + " rows");
    }
}

void check_q(double q) {
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("gce: q must lie in (0, 1], got " + std::to_string(q));
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

Tensor picked(const Tensor& probs, std::span<const std::size_t> labels) {
    return ops::clamp_min(ops::gather_index(probs, labels), kProbFloor);
}

Tensor sum_terms(const std::vector<Tensor>& terms) {
    Tensor acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = ops::add(acc, terms[i]);
    return acc;
}

void check_members(std::span<const std::size_t> members, std::span<const std::size_t> pseudo, std::size_t rows,
                   const char* who) {
    if (members.size() != pseudo.size()) {
        throw std::invalid_argument(std::string(who) + ": members and pseudo-labels differ in length");
    }
    for (auto i : members)
        if (i >= rows) throw std::out_of_range(std::string(who) + ": member index out of range");
}

}  // namespace

Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
    check_labels(probs, labels, "cross_entropy");
    return ops::scale(ops::log(picked(probs, labels)), Real(-1));
}

Tensor gce(const Tensor& probs, std::span<const std::size_t> labels, double q) {
    check_q(q);
    check_labels(probs, labels, "gce");
    const Real inv_q = static_cast<Real>(1.0 / q);
    const Tensor powered = ops::pow_scalar(picked(probs, labels), static_cast<Real>(q));
    const Tensor offset = Tensor::constant({labels.size()}, std::vector<Real>(labels.size(), inv_q));
    return ops::add(ops::scale(powered, -inv_q), offset);
}

double cross_entropy(std::size_t label, std::span<const Real> p) {
    if (label >= p.size()) throw std::out_of_range("cross_entropy: label out of range");
    return -std::log(std::max(static_cast<double>(p[label]), static_cast<double>(kProbFloor)));
}

double gce(std::size_t label, std::span<const Real> p, double q) {
    check_q(q);
    if (label >= p.size()) throw std::out_of_range("gce: label out of range");
    const double v = std::max(static_cast<double>(p[label]), static_cast<double>(kProbFloor));
    return (1.0 - std::pow(v, q)) / q;
}

std::string_view view_set_name(ViewSet v) {
    switch (v) {
        case ViewSet::both: return "both";
        case ViewSet::weak: return "weak";
        case ViewSet::strong: return "strong";
    }
    return "both";
}

ViewSet parse_view_set(std::string_view name) {
    const auto s = lower(name);
    for (auto v : {ViewSet::both, ViewSet::weak, ViewSet::strong})
        if (s == view_set_name(v)) return v;
    throw std::invalid_argument("unknown view set '" + std::string(name) + "'");
}

std::string_view dar_kind_name(DarKind k) { return k == DarKind::gce ? "gce" : "ce"; }

DarKind parse_dar_kind(std::string_view name) {
    const auto s = lower(name);
    if (s == "gce") return DarKind::gce;
    if (s == "ce") return DarKind::ce;
    throw std::invalid_argument("unknown dar loss kind '" + std::string(name) + "'");
}

Tensor loss_sup(const model::BatchPredictions& labeled, std::span<const std::size_t> labels) {
    std::vector<Tensor> per_head;
    for (const auto& h : labeled.heads()) per_head.push_back(cross_entropy(h, labels));
    return ops::mean_all(sum_terms(per_head));
}

Tensor loss_cdcr(const model::BatchPredictions& strong, std::span<const std::size_t> members,
                 std::span<const std::size_t> pseudo_labels) {
    check_members(members, pseudo_labels, strong.size(), "loss_cdcr");
    if (members.empty()) return Tensor::scalar(Real(0));
    std::vector<Tensor> per_head;
    for (const auto& h : strong.heads()) per_head.push_back(cross_entropy(ops::select_rows(h, members), pseudo_labels));
    return ops::mean_all(sum_terms(per_head));
}

Tensor loss_dar(const model::BatchPredictions& weak, const model::BatchPredictions& strong,
                std::span<const std::size_t> members, std::span<const std::size_t> pseudo_labels, double q,
                DarKind kind, ViewSet views) {
    check_q(q);
    check_members(members, pseudo_labels, weak.size(), "loss_dar");
    check_members(members, pseudo_labels, strong.size(), "loss_dar");
    if (members.empty()) return Tensor::scalar(Real(0));
    std::vector<Tensor> terms;
    auto add_view = [&](const model::BatchPredictions& preds) {
        for (const auto& h : preds.heads()) {
            const Tensor rows = ops::select_rows(h, members);
            terms.push_back(kind == DarKind::gce ? gce(rows, pseudo_labels, q) : cross_entropy(rows, pseudo_labels));
        }
    };
    if (views != ViewSet::strong) add_view(weak);
    if (views != ViewSet::weak) add_view(strong);
    return ops::mean_all(sum_terms(terms));
}

Tensor align_pair(const Tensor& z, const Tensor& mu, const Tensor& mu_bar) {
    return ops::add(ops::sq_l2_dist(z, mu.detach()), ops::sq_l2_dist(z, mu_bar.detach()));
}

Objective total_objective(const ObjectiveTerms& terms, const ObjectiveWeights& weights) {
    if (!terms.sup.defined()) throw std::invalid_argument("total_objective: supervised term missing");
    Objective out;
    Tensor total = terms.sup;
    auto accumulate = [&](const Tensor& term, double lambda, double& slot) {
        if (!term.defined()) return;
        slot = static_cast<double>(term.item());
        if (lambda == 0.0) return;
        total = ops::add(total, ops::scale(term, static_cast<Real>(lambda)));
    };
    out.breakdown.sup = static_cast<double>(terms.sup.item());
    accumulate(terms.cdcr, weights.lambda_cdcr, out.breakdown.cdcr);
    accumulate(terms.dar, weights.lambda_dar, out.breakdown.dar);
    accumulate(terms.cmpa, weights.lambda_cmpa, out.breakdown.cmpa);
    out.breakdown.total = static_cast<double>(total.item());
    out.breakdown.n_labeled = terms.n_labeled;
    out.breakdown.n_consensus = terms.n_consensus;
    out.breakdown.n_disagreement = terms.n_disagreement;
    out.total = total;
    return out;
}

}  // namespace ssmdg::losses
