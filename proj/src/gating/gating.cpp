#include "ssmdg/gating/gating.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace ssmdg::gating {

std::string_view variant_name(GateVariant v) {
    switch (v) {
        case GateVariant::full: return "full";
        case GateVariant::mean: return "mean";
        case GateVariant::any2: return "any2";
        case GateVariant::strict: return "strict";
        case GateVariant::fused_only: return "fused_only";
    }
    return "full";
}

GateVariant parse_variant(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto v : {GateVariant::full, GateVariant::mean, GateVariant::any2, GateVariant::strict, GateVariant::fused_only}) {
        if (lower == variant_name(v)) return v;
    }
    throw std::invalid_argument("unknown gate variant '" + std::string(name) + "'");
}

std::size_t argmax(std::span<const Real> p) {
    if (p.empty()) throw std::invalid_argument("argmax of empty vector");
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

Real max_prob(std::span<const Real> p) { return p[argmax(p)]; }

namespace {

constexpr double kSumTolerance = 1e-6;

void check_distribution(std::span<const Real> p, std::size_t classes, const char* head) {
    if (p.size() != classes || classes < 2) {
        throw std::invalid_argument(std::string("gate: ") + head + " has " + std::to_string(p.size()) +
                                    " entries, expected " + std::to_string(classes));
    }
    double sum = 0.0;
    for (Real v : p) {
        if (!(v >= Real(0)) || !std::isfinite(v)) throw std::invalid_argument(std::string("gate: ") + head + " has a negative or non-finite entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw std::invalid_argument(std::string("gate: ") + head + " sums to " + std::to_string(sum));
    }
}

bool confident_on(std::span<const Real> p, std::size_t label, double tau) {
    return argmax(p) == label && max_prob(p) > tau;
}

}  // namespace

GateDecision gate_sample(const model::HeadProbs& weak, double tau, GateVariant variant) {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("gate: tau must lie in (0,1)");
    const std::size_t classes = weak.fused.size();
    check_distribution(weak.fused, classes, "fused head");
    for (const auto& p : weak.unimodal) check_distribution(p, classes, "unimodal head");
    if (weak.unimodal.empty()) throw std::invalid_argument("gate: no unimodal heads");

    const std::size_t y = argmax(weak.fused);
    const bool fused_confident = max_prob(weak.fused) > tau;
    auto fallback = [&]() { return fused_confident ? GateDecision::disagreement(y) : GateDecision::rejected(); };

    switch (variant) {
        case GateVariant::fused_only:
            return fused_confident ? GateDecision::consensus(y) : GateDecision::rejected();

        case GateVariant::full: {
            if (!fused_confident) return GateDecision::rejected();
            const bool supported = std::any_of(weak.unimodal.begin(), weak.unimodal.end(),
                                               [&](const auto& p) { return confident_on(p, y, tau); });
            return supported ? GateDecision::consensus(y) : GateDecision::disagreement(y);
        }

        case GateVariant::strict: {
            if (!fused_confident) return GateDecision::rejected();
            const bool unanimous = std::all_of(weak.unimodal.begin(), weak.unimodal.end(),
                                               [&](const auto& p) { return confident_on(p, y, tau); });
            return unanimous ? GateDecision::consensus(y) : GateDecision::disagreement(y);
        }

        case GateVariant::any2: {
            // A pair of heads (fused included) confidently agreeing on the fused argmax.
            std::size_t agreeing = confident_on(weak.fused, y, tau) ? 1 : 0;
            for (const auto& p : weak.unimodal) agreeing += confident_on(p, y, tau) ? 1 : 0;
            return agreeing >= 2 ? GateDecision::consensus(y) : fallback();
        }

        case GateVariant::mean: {
            std::vector<double> avg(classes, 0.0);
            std::size_t contributing = 0;
            auto accumulate = [&](const std::vector<Real>& p) {
                if (max_prob(p) > tau) {
                    for (std::size_t c = 0; c < classes; ++c) avg[c] += p[c];
                    ++contributing;
                }
            };
            for (const auto& p : weak.unimodal) accumulate(p);
            accumulate(weak.fused);
            if (contributing > 0) {
                std::vector<Real> mean(classes);
                for (std::size_t c = 0; c < classes; ++c) mean[c] = static_cast<Real>(avg[c] / static_cast<double>(contributing));
                if (max_prob(mean) > tau) return GateDecision::consensus(argmax(mean));
            }
            return fallback();
        }
    }
    return GateDecision::rejected();
}

std::vector<std::size_t> GateBatch::indices(GateOutcome outcome) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < decisions.size(); ++i)
        if (decisions[i].outcome == outcome) out.push_back(i);
    return out;
}

std::vector<std::size_t> GateBatch::accepted_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < decisions.size(); ++i)
        if (decisions[i].accepted()) out.push_back(i);
    return out;
}

GateBatch gate_batch(std::span<const model::HeadProbs> weak, double tau, GateVariant variant) {
    GateBatch out;
    out.decisions.reserve(weak.size());
    for (const auto& p : weak) {
        out.decisions.push_back(gate_sample(p, tau, variant));
        out.n_consensus += out.decisions.back().outcome == GateOutcome::consensus;
        out.n_disagreement += out.decisions.back().outcome == GateOutcome::disagreement;
    }
    if (!weak.empty()) {
        out.utilization = static_cast<double>(out.n_consensus + out.n_disagreement) / static_cast<double>(weak.size());
    }
    return out;
}

GateBatch gate_batch(const model::BatchPredictions& weak, double tau, GateVariant variant) {
    std::vector<model::HeadProbs> rows;
    rows.reserve(weak.size());
    for (std::size_t i = 0; i < weak.size(); ++i) rows.push_back(weak.row(i));
    return gate_batch(rows, tau, variant);
}

}  // namespace ssmdg::gating
