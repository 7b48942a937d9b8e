#include "ssmdg/cli/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "ssmdg/data/rng.hpp"
#include "ssmdg/diff/gradcheck.hpp"
#include "ssmdg/diff/ops.hpp"
#include "ssmdg/gating/gating.hpp"
#include "ssmdg/train/trainer.hpp"

namespace ssmdg::cli {

namespace ops = ssmdg::diff;
using diff::OpKind;
using diff::Real;

namespace {

Tensor random_constant(data::Rng& rng, diff::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<Real> v(diff::shape_size(shape));
    for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
    return Tensor::constant(std::move(shape), std::move(v));
}

Tensor random_parameter(data::Rng& rng, const std::string& name, diff::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<Real> v(diff::shape_size(shape));
    for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
    return Tensor::parameter(name, std::move(shape), std::move(v));
}

/// Magnitude in [lo, hi] with a random sign; keeps entries away from kinks.
Tensor signed_parameter(data::Rng& rng, const std::string& name, diff::Shape shape, double lo, double hi) {
    std::vector<Real> v(diff::shape_size(shape));
    for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi) * (rng.bernoulli(0.5) ? 1.0 : -1.0));
    return Tensor::parameter(name, std::move(shape), std::move(v));
}

}  // namespace

GradientFixture make_gradient_fixture(std::uint64_t seed) {
    data::Rng rng(seed, "gradient-fixture");
    model::ModelConfig cfg;
    cfg.num_modalities = 2;
    cfg.input_dims = {4, 5};
    cfg.feature_dims = {3, 4};
    cfg.encoder_hidden = 5;
    cfg.translator_hidden = 4;
    cfg.num_classes = 3;
    cfg.init_seed = seed;
    model::Model model(cfg);
    // Non-zero biases so the fixture does not sit on a symmetric point.
    for (auto& p : model.parameters()) {
        if (p.rank() == 1)
            for (auto& v : p.mutable_data()) v = static_cast<Real>(rng.uniform(-0.3, 0.3));
    }

    constexpr std::size_t kDomains = 2;
    prototypes::PrototypeBank bank(cfg.feature_dims, cfg.num_classes, kDomains, 0.9);
    for (std::size_t m = 0; m < 2; ++m)
        for (std::size_t c = 0; c < cfg.num_classes; ++c)
            for (std::size_t k = 0; k < kDomains; ++k) {
                if (!rng.bernoulli(0.75)) continue;
                std::vector<Real> mu(cfg.feature_dims[m]);
                for (auto& v : mu) v = static_cast<Real>(rng.uniform(-1.0, 1.0));
                bank.set(m, c, k, mu);
            }

    GradientFixture fx(std::move(model), std::move(bank));
    constexpr std::size_t kLabeled = 4, kUnlabeled = 6;
    for (std::size_t m = 0; m < 2; ++m) {
        fx.labeled.push_back(random_constant(rng, {kLabeled, cfg.input_dims[m]}, -2.0, 2.0));
        fx.weak.push_back(random_constant(rng, {kUnlabeled, cfg.input_dims[m]}, -2.0, 2.0));
        fx.strong.push_back(random_constant(rng, {kUnlabeled, cfg.input_dims[m]}, -2.0, 2.0));
    }
    for (std::size_t i = 0; i < kLabeled; ++i) fx.labels.push_back(rng.index(cfg.num_classes));
    for (std::size_t i = 0; i < kUnlabeled; ++i) {
        fx.domains.push_back(rng.index(kDomains));
        // The first two samples land in each set so neither is empty.
        const std::size_t set = i < 2 ? i : rng.index(3);
        const std::size_t y = rng.index(cfg.num_classes);
        if (set == 0) fx.consensus.push_back(i), fx.consensus_labels.push_back(y);
        if (set == 1) fx.disagreement.push_back(i), fx.disagreement_labels.push_back(y);
        if (set < 2) fx.accepted.push_back(i), fx.accepted_labels.push_back(y);
    }
    fx.q = rng.uniform(0.3, 1.0);
    return fx;
}

std::string_view loss_term_name(LossTerm term) {
    switch (term) {
        case LossTerm::sup: return "loss_sup";
        case LossTerm::cdcr: return "loss_cdcr";
        case LossTerm::dar: return "loss_dar";
        case LossTerm::cmpa: return "loss_cmpa";
        case LossTerm::total: return "total";
    }
    return "total";
}

Tensor evaluate_term(const GradientFixture& fx, LossTerm term) {
    const auto& model = fx.model;
    const bool all = term == LossTerm::total;
    losses::ObjectiveTerms terms;

    std::vector<Tensor> lf;
    for (std::size_t m = 0; m < fx.labeled.size(); ++m) lf.push_back(model.encode(m, fx.labeled[m]));
    terms.sup = losses::loss_sup(model.predict_heads(lf), fx.labels);
    if (term == LossTerm::sup) return terms.sup;

    std::vector<Tensor> wf, sf;
    for (std::size_t m = 0; m < fx.weak.size(); ++m) {
        wf.push_back(model.encode(m, fx.weak[m]));
        sf.push_back(model.encode(m, fx.strong[m]));
    }
    const auto weak = model.predict_heads(wf);
    const auto strong = model.predict_heads(sf);
    if (all || term == LossTerm::cdcr) terms.cdcr = losses::loss_cdcr(strong, fx.consensus, fx.consensus_labels);
    if (all || term == LossTerm::dar) {
        terms.dar = losses::loss_dar(weak, strong, fx.disagreement, fx.disagreement_labels, fx.q);
    }
    if (all || term == LossTerm::cmpa) {
        std::vector<std::size_t> domains;
        for (auto i : fx.accepted) domains.push_back(fx.domains[i]);
        const auto batch = train::build_cmpa_batch(model, wf, sf, fx.accepted, fx.accepted_labels, domains, fx.cmpa);
        terms.cmpa = prototypes::loss_cmpa(fx.bank, batch, fx.cmpa).loss;
    }
    switch (term) {
        case LossTerm::cdcr: return terms.cdcr;
        case LossTerm::dar: return terms.dar;
        case LossTerm::cmpa: return terms.cmpa;
        default: return losses::total_objective(terms, fx.weights).total;
    }
}

// --- kernel suite ------------------------------------------------------------

std::vector<CheckResult> kernel_gradient_checks(std::uint64_t seed, double tolerance) {
    struct Program {
        OpKind kind;
        std::function<Tensor(const diff::ParameterSet&)> body;  // returns the kernel output
        bool reduce = true;  // false: body already returns the scalar loss
    };
    data::Rng rng(seed, "kernel-checks");
    diff::ParameterSet params;
    auto add = [&](Tensor t) { params.add(t); };
    add(random_parameter(rng, "a", {3, 4}));
    add(random_parameter(rng, "b", {4, 2}));
    add(random_parameter(rng, "c", {3, 4}));
    add(random_parameter(rng, "bias", {4}));
    add(signed_parameter(rng, "kinked", {3, 4}, 0.1, 1.0));
    add(random_parameter(rng, "left", {3, 2}));
    add(random_parameter(rng, "right", {3, 3}));
    add(random_parameter(rng, "positive", {3, 4}, 0.5, 2.0));
    add(random_parameter(rng, "rows", {4, 3}));
    add(random_parameter(rng, "vec", {5}));
    add(random_parameter(rng, "vec2", {5}));
    // Entries at least 0.1 away from the clamp floor of 0.3.
    std::vector<Real> clamp_vals(12);
    for (auto& v : clamp_vals) v = static_cast<Real>(rng.bernoulli(0.5) ? rng.uniform(0.4, 1.0) : rng.uniform(-0.5, 0.2));
    add(Tensor::parameter("clamped", {3, 4}, clamp_vals));
    const std::vector<std::size_t> gather_idx{1, 3, 0};
    const std::vector<std::size_t> select_idx{2, 0, 2};

    const std::vector<Program> programs = {
        {OpKind::matmul, [](const auto& p) { return ops::matmul(p.at("a"), p.at("b")); }},
        {OpKind::add, [](const auto& p) { return ops::add(ops::add(p.at("a"), p.at("c")), p.at("bias")); }},
        {OpKind::relu, [](const auto& p) { return ops::relu(p.at("kinked")); }},
        {OpKind::concat_last_axis,
         [](const auto& p) {
             const std::vector<Tensor> parts{p.at("left"), p.at("right")};
             return ops::concat_last_axis(parts);
         }},
        {OpKind::softmax_last_axis, [](const auto& p) { return ops::softmax_last_axis(p.at("a")); }},
        {OpKind::log, [](const auto& p) { return ops::log(p.at("positive")); }},
        {OpKind::pow_scalar, [](const auto& p) { return ops::pow_scalar(p.at("positive"), Real(0.7)); }},
        {OpKind::mean_all, [](const auto& p) { return ops::mean_all(p.at("a")); }},
        {OpKind::sum_all, [](const auto& p) { return ops::sum_all(p.at("c")); }, false},
        {OpKind::sq_l2_dist, [](const auto& p) { return ops::sum_all(ops::sq_l2_dist(p.at("vec"), p.at("vec2"))); },
         false},
        {OpKind::scale, [](const auto& p) { return ops::scale(p.at("a"), Real(-1.7)); }},
        {OpKind::gather_index, [&](const auto& p) { return ops::gather_index(p.at("a"), gather_idx); }},
        {OpKind::clamp_min, [](const auto& p) { return ops::clamp_min(p.at("clamped"), Real(0.3)); }},
        {OpKind::select_rows, [&](const auto& p) { return ops::select_rows(p.at("rows"), select_idx); }},
    };

    std::vector<CheckResult> out;
    for (const auto& prog : programs) {
        // Reduce through a squared distance to a fixed random target so the
        // loss is not invariant to a uniform shift of the kernel output.
        const Tensor probe = prog.body(params);
        data::Rng target_rng(seed, "kernel-target", static_cast<std::uint64_t>(prog.kind));
        const Tensor target = random_constant(target_rng, probe.shape());
        const diff::LossFn loss = [&](const diff::ParameterSet& p) {
            return prog.reduce ? ops::sum_all(ops::sq_l2_dist(prog.body(p), target)) : prog.body(p);
        };
        const auto used = diff::recorded_kernels(loss(params));
        const auto report = diff::finite_diff_report(loss, params);
        CheckResult r;
        r.name = std::string("kernel ") + std::string(diff::op_name(prog.kind));
        r.max_error = report.max_relative_error;
        r.passed = report.max_relative_error <= tolerance;
        r.kernels.insert(used.begin(), used.end());
        if (!r.passed) {
            r.detail = fmt::format("worst at {}[{}]: analytic {} numeric {}", report.worst_parameter,
                                   report.worst_index, report.analytic, report.numeric);
        }
        out.push_back(std::move(r));
    }
    return out;
}

// --- loss suite --------------------------------------------------------------

std::vector<CheckResult> loss_gradient_checks(std::size_t fixtures, std::uint64_t seed, double tolerance) {
    std::vector<CheckResult> out;
    for (auto term : kAllLossTerms) {
        CheckResult r;
        r.name = std::string(loss_term_name(term));
        for (std::size_t f = 0; f < fixtures; ++f) {
            auto fx = make_gradient_fixture(data::splitmix64(seed + f));
            for (auto k : diff::recorded_kernels(evaluate_term(fx, term))) r.kernels.insert(k);
            const diff::LossFn loss = [&](const diff::ParameterSet&) { return evaluate_term(fx, term); };
            const auto report = diff::finite_diff_report(loss, fx.model.parameters());
            if (report.max_relative_error >= r.max_error) {
                r.max_error = report.max_relative_error;
                r.detail = fmt::format("worst fixture {} at {}[{}]", f, report.worst_parameter, report.worst_index);
            }
        }
        r.passed = r.max_error <= tolerance;
        r.detail = fmt::format("{} fixtures; {}", fixtures, r.detail);
        out.push_back(std::move(r));
    }
    return out;
}

// --- gate oracle -------------------------------------------------------------

namespace {

// Rule-by-rule restatement of the gate, written against "confident on class
// c" predicates rather than the production control flow.
gating::GateDecision oracle_gate(const model::HeadProbs& h, double tau, gating::GateVariant variant) {
    const std::size_t C = h.fused.size();
    auto top = [](const std::vector<Real>& p) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.size(); ++c)
            if (p[c] > p[best]) best = c;
        return best;
    };
    auto confident_on = [&](const std::vector<Real>& p, std::size_t c) { return top(p) == c && p[c] > tau; };
    const std::size_t y = top(h.fused);
    const bool fused_ok = confident_on(h.fused, y);
    std::size_t unimodal_ok = 0;
    for (const auto& u : h.unimodal) unimodal_ok += confident_on(u, y);
    const auto otherwise = fused_ok ? gating::GateDecision::disagreement(y) : gating::GateDecision::rejected();

    switch (variant) {
        case gating::GateVariant::fused_only:
            return fused_ok ? gating::GateDecision::consensus(y) : gating::GateDecision::rejected();
        case gating::GateVariant::full:
            return fused_ok && unimodal_ok >= 1 ? gating::GateDecision::consensus(y) : otherwise;
        case gating::GateVariant::strict:
            return fused_ok && unimodal_ok == h.unimodal.size() ? gating::GateDecision::consensus(y) : otherwise;
        case gating::GateVariant::any2:
            return unimodal_ok + (fused_ok ? 1 : 0) >= 2 ? gating::GateDecision::consensus(y) : otherwise;
        case gating::GateVariant::mean: {
            std::vector<const std::vector<Real>*> members;
            for (const auto& u : h.unimodal)
                if (u[top(u)] > tau) members.push_back(&u);
            if (h.fused[y] > tau) members.push_back(&h.fused);
            if (members.empty()) return otherwise;
            std::vector<Real> avg(C, Real(0));
            for (std::size_t c = 0; c < C; ++c) {
                double s = 0.0;
                for (const auto* p : members) s += (*p)[c];
                avg[c] = static_cast<Real>(s / static_cast<double>(members.size()));
            }
            const std::size_t a = top(avg);
            return avg[a] > tau ? gating::GateDecision::consensus(a) : otherwise;
        }
    }
    return gating::GateDecision::rejected();
}

}  // namespace

CheckResult gate_oracle_check(double tau) {
    constexpr std::size_t C = 3;
    const double maxima[] = {0.90, 0.94, 0.96, 0.99};
    std::vector<std::vector<Real>> heads;
    for (double v : maxima) {
        for (std::size_t a = 0; a < C; ++a) {
            std::vector<Real> p(C, static_cast<Real>((1.0 - v) / static_cast<double>(C - 1)));
            p[a] = static_cast<Real>(v);
            heads.push_back(p);
        }
    }
    std::size_t total = 0, agree = 0;
    std::string first_mismatch;
    for (auto variant : {gating::GateVariant::full, gating::GateVariant::mean, gating::GateVariant::any2,
                         gating::GateVariant::strict, gating::GateVariant::fused_only}) {
        for (const auto& u0 : heads)
            for (const auto& u1 : heads)
                for (const auto& f : heads) {
                    const model::HeadProbs h{{u0, u1}, f};
                    const bool same = gating::gate_sample(h, tau, variant) == oracle_gate(h, tau, variant);
                    ++total;
                    agree += same;
                    if (!same && first_mismatch.empty()) {
                        first_mismatch = fmt::format("first mismatch: variant {}", gating::variant_name(variant));
                    }
                }
    }
    CheckResult r;
    r.name = "gate oracle";
    r.passed = agree == total;
    r.max_error = 1.0 - static_cast<double>(agree) / static_cast<double>(total);
    r.detail = fmt::format("{}/{} cases agree{}{}", agree, total, first_mismatch.empty() ? "" : "; ", first_mismatch);
    return r;
}

CheckResult ema_unroll_check() {
    CheckResult r;
    r.name = "ema unroll";
    constexpr int kUpdates = 10;
    const std::vector<Real> mu0{Real(1.5), Real(-0.25), Real(3.0)};
    const std::vector<Real> b{Real(-2.0), Real(0.75), Real(0.5)};
    for (double alpha : {0.5, 0.9, 0.99}) {
        prototypes::PrototypeBank bank({3}, 1, 1, alpha);
        bank.set(0, 0, 0, mu0);
        const prototypes::Observation obs{0, 0, 0, b};
        for (int n = 0; n < kUpdates; ++n) prototypes::ema_update(bank, std::span(&obs, 1));
        const double an = std::pow(alpha, kUpdates);
        const auto cell = bank.cell(0, 0, 0);
        for (std::size_t j = 0; j < 3; ++j) {
            const double expected = an * static_cast<double>(mu0[j]) + (1.0 - an) * static_cast<double>(b[j]);
            r.max_error = std::max(r.max_error, std::abs(static_cast<double>(cell[j]) - expected));
        }
    }
    r.passed = r.max_error <= 1e-10;
    r.detail = "alpha in {0.5, 0.9, 0.99}, 10 updates";
    return r;
}

std::vector<OpKind> suspect_kernels(const std::vector<CheckResult>& results) {
    std::optional<std::set<OpKind>> common;
    std::set<OpKind> cleared;
    for (const auto& r : results) {
        if (r.kernels.empty()) continue;
        if (r.passed) {
            cleared.insert(r.kernels.begin(), r.kernels.end());
            continue;
        }
        if (!common) {
            common = r.kernels;
        } else {
            std::set<OpKind> both;
            std::set_intersection(common->begin(), common->end(), r.kernels.begin(), r.kernels.end(),
                                  std::inserter(both, both.begin()));
            common = std::move(both);
        }
    }
    std::vector<OpKind> out;
    if (!common) return out;
    for (auto k : *common)
        if (!cleared.count(k)) out.push_back(k);
    return out;
}

bool run_diagnostics(std::ostream& out, std::size_t fixtures, std::uint64_t seed) {
    std::vector<CheckResult> results = kernel_gradient_checks(seed);
    for (auto& r : loss_gradient_checks(fixtures, seed)) results.push_back(std::move(r));
    results.push_back(gate_oracle_check());
    results.push_back(ema_unroll_check());

    bool ok = true;
    for (const auto& r : results) {
        ok = ok && r.passed;
        out << fmt::format("{} {:<24} {}={:.3e}{}{}\n", r.passed ? "PASS" : "FAIL", r.name,
                           r.kernels.empty() ? "max_error" : "max_relative_error", r.max_error,
                           r.detail.empty() ? "" : "  ", r.detail);
    }
    if (!ok) {
        const auto suspects = suspect_kernels(results);
        std::string names;
        for (auto k : suspects) names += (names.empty() ? "" : ", ") + std::string(diff::op_name(k));
        if (!names.empty()) out << "suspect kernel: " << names << '\n';
    }
    out << (ok ? "diag: all checks passed\n" : "diag: FAILED\n");
    return ok;
}

}  // namespace ssmdg::cli
