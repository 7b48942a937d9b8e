#include "ssmdg/train/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "ssmdg/data/rng.hpp"
#include "ssmdg/diff/ops.hpp"

namespace ssmdg::train {

namespace ops = ssmdg::diff;

namespace {

/// One [n, d] constant per modality from per-sample inputs.
std::vector<Tensor> stack(const std::vector<const data::ModalityInputs*>& rows, std::size_t num_modalities) {
    std::vector<Tensor> out;
    for (std::size_t m = 0; m < num_modalities; ++m) {
        const std::size_t d = rows.front()->at(m).size();
        std::vector<Real> values;
        values.reserve(rows.size() * d);
        for (const auto* r : rows) {
            const auto& x = r->at(m);
            for (double v : x) values.push_back(static_cast<Real>(v));
        }
        out.push_back(Tensor::constant({rows.size(), d}, std::move(values)));
    }
    return out;
}


std::vector<std::size_t> draw(std::size_t pool_size, std::size_t n, data::Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(n);
    if (pool_size >= n) {
        std::vector<std::size_t> order(pool_size);
        std::iota(order.begin(), order.end(), std::size_t{0});
        // Partial Fisher-Yates: the first n entries are a uniform sample without replacement.
        for (std::size_t i = 0; i < n; ++i) std::swap(order[i], order[i + rng.index(pool_size - i)]);
        out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    } else {
        for (std::size_t i = 0; i < n; ++i) out.push_back(rng.index(pool_size));
    }
    return out;
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return data::splitmix64(a ^ data::splitmix64(b)); }

bool finite(const losses::LossBreakdown& b) { return std::isfinite(b.total); }

std::string describe(std::size_t step, const losses::LossBreakdown& b) {
    return "non-finite loss at step " + std::to_string(step) + " (sup=" + std::to_string(b.sup) +
           ", cdcr=" + std::to_string(b.cdcr) + ", dar=" + std::to_string(b.dar) + ", cmpa=" +
           std::to_string(b.cmpa) + ", total=" + std::to_string(b.total) + ")";
}

}  // namespace

NumericError::NumericError(std::size_t step, const losses::LossBreakdown& breakdown)
    : std::runtime_error(describe(step, breakdown)), step_(step), breakdown_(breakdown) {}

Batch assemble_batch(const std::vector<data::DomainDataset>& sources, const ExperimentConfig& config,
                     std::uint64_t step_seed) {
    if (sources.empty()) throw std::invalid_argument("assemble_batch: no source domains");
    std::vector<std::pair<std::size_t, std::size_t>> labeled_pool, unlabeled_pool;  // (source, index)
    for (std::size_t s = 0; s < sources.size(); ++s) {
        for (std::size_t i = 0; i < sources[s].n_labeled(); ++i) labeled_pool.emplace_back(s, i);
        for (std::size_t i = 0; i < sources[s].n_unlabeled(); ++i) unlabeled_pool.emplace_back(s, i);
    }
    if (labeled_pool.empty()) throw std::invalid_argument("assemble_batch: empty labeled pool");
    const std::size_t n_u = config.unlabeled_batch();
    if (n_u > 0 && unlabeled_pool.empty()) throw std::invalid_argument("assemble_batch: empty unlabeled pool");
    const std::size_t M = config.task.num_modalities;
    const double sigma = config.task.noise_sigma;

    Batch batch;
    data::Rng rng(step_seed, "batch");
    std::vector<data::ModalityInputs> views;
    views.reserve(config.labeled_batch);
    for (std::size_t slot = 0; const auto pick : draw(labeled_pool.size(), config.labeled_batch, rng)) {
        const auto [s, i] = labeled_pool[pick];
        const auto& sample = sources[s].labeled()[i];
        views.push_back(data::augment(sample, data::Strength::weak, sigma, mix(step_seed, slot++)));
        batch.labeled.labels.push_back(sources[s].labels()[i]);
        batch.labeled.domains.push_back(sample.domain);
        batch.labeled.ids.push_back(sample.id);
    }
    std::vector<const data::ModalityInputs*> rows;
    for (const auto& v : views) rows.push_back(&v);
    batch.labeled.weak = stack(rows, M);

    if (n_u == 0) return batch;
    std::vector<data::ModalityInputs> weak, strong;
    weak.reserve(n_u);
    strong.reserve(n_u);
    for (std::size_t slot = 0; const auto pick : draw(unlabeled_pool.size(), n_u, rng)) {
        const auto [s, i] = unlabeled_pool[pick];
        const auto& sample = sources[s].unlabeled()[i];
        const auto seed = mix(step_seed, 1'000'000 + slot++);
        weak.push_back(data::augment(sample, data::Strength::weak, sigma, seed));
        strong.push_back(data::augment(sample, data::Strength::strong, sigma, seed));
        batch.unlabeled.domains.push_back(sample.domain);
        batch.unlabeled.ids.push_back(sample.id);
    }
    rows.clear();
    for (const auto& v : weak) rows.push_back(&v);
    batch.unlabeled.weak = stack(rows, M);
    rows.clear();
    for (const auto& v : strong) rows.push_back(&v);
    batch.unlabeled.strong = stack(rows, M);
    return batch;
}

TrainState make_train_state(const ExperimentConfig& config, std::uint64_t init_seed) {
    TrainState state{model::Model(config.model_config(init_seed)),
                     prototypes::PrototypeBank(config.feature_dims, config.task.num_classes, config.task.num_domains,
                                               config.alpha),
                     diff::AdamWState{config.optimizer, 0, {}, {}}, 0, std::nullopt};
    return state;
}

prototypes::CmpaBatch build_cmpa_batch(const model::Model& model, const std::vector<Tensor>& weak_features,
                                       const std::vector<Tensor>& strong_features,
                                       const std::vector<std::size_t>& accepted,
                                       std::vector<std::size_t> pseudo_labels, std::vector<std::size_t> domains,
                                       const prototypes::CmpaSwitches& switches) {
    prototypes::CmpaBatch cmpa;
    cmpa.pseudo_labels = std::move(pseudo_labels);
    cmpa.domains = std::move(domains);
    if (accepted.empty()) return cmpa;
    const std::size_t M = model.config().num_modalities;
    auto fill = [&](const std::vector<Tensor>& features, std::vector<Tensor>& own, std::vector<Tensor>& translated) {
        std::map<std::size_t, Tensor> selected;
        for (std::size_t m = 0; m < M; ++m) {
            own.push_back(ops::select_rows(features[m], accepted));
            selected.emplace(m, own.back());
        }
        if (!switches.translated) return;
        for (std::size_t m = 0; m < M; ++m) translated.push_back(model.translate_into(m, selected));
    };
    if (switches.views != losses::ViewSet::strong) fill(weak_features, cmpa.weak, cmpa.weak_translated);
    if (switches.views != losses::ViewSet::weak) fill(strong_features, cmpa.strong, cmpa.strong_translated);
    return cmpa;
}

StepMetrics train_step(TrainState& state, const Batch& batch, const ExperimentConfig& config,
                       const data::LabelOracle* oracle) {
    const auto& model = state.model;
    const std::size_t M = model.config().num_modalities;
    if (state.target_domain) {
        auto leaks = [&](const std::vector<std::size_t>& domains) {
            return std::find(domains.begin(), domains.end(), *state.target_domain) != domains.end();
        };
        if (leaks(batch.labeled.domains) || leaks(batch.unlabeled.domains)) {
            throw std::logic_error("train_step: batch contains samples from the held-out target domain");
        }
    }
    const auto& w = config.weights;
    const bool use_unlabeled = w.lambda_cdcr > 0.0 || w.lambda_dar > 0.0 || w.lambda_cmpa > 0.0;

    losses::ObjectiveTerms terms;
    StepMetrics metrics;
    metrics.step = state.step;

    // (1) supervised
    std::vector<Tensor> labeled_features;
    for (std::size_t m = 0; m < M; ++m) labeled_features.push_back(model.encode(m, batch.labeled.weak[m]));
    const auto labeled_preds = model.predict_heads(labeled_features);
    terms.sup = losses::loss_sup(labeled_preds, batch.labeled.labels);
    terms.n_labeled = batch.labeled.size();

    // (2) prototypes from detached labeled features
    {
        std::vector<Tensor> detached;
        for (const auto& f : labeled_features) detached.push_back(f.detach());
        prototypes::ema_update(state.bank, detached, batch.labeled.labels, batch.labeled.domains);
    }

    if (batch.unlabeled.size() > 0) {
        // (3) weak forward and gating
        std::optional<diff::NoGradGuard> no_grad;
        if (!use_unlabeled) no_grad.emplace();
        std::vector<Tensor> weak_features;
        for (std::size_t m = 0; m < M; ++m) weak_features.push_back(model.encode(m, batch.unlabeled.weak[m]));
        const auto weak_preds = model.predict_heads(weak_features);
        const auto gate = gating::gate_batch(weak_preds, config.tau, config.gate);
        const auto consensus = gate.indices(gating::GateOutcome::consensus);
        const auto disagreement = gate.indices(gating::GateOutcome::disagreement);
        const auto accepted = gate.accepted_indices();
        auto labels_of = [&](const std::vector<std::size_t>& idx) {
            std::vector<std::size_t> out;
            for (auto i : idx) out.push_back(*gate.decisions[i].pseudo_label);
            return out;
        };
        metrics.utilization = gate.utilization;
        metrics.n_consensus = gate.n_consensus;
        metrics.n_disagreement = gate.n_disagreement;
        terms.n_consensus = gate.n_consensus;
        terms.n_disagreement = gate.n_disagreement;

        if (oracle) {
            auto accuracy = [&](const std::vector<std::size_t>& idx) -> std::optional<double> {
                if (idx.empty()) return std::nullopt;
                std::size_t correct = 0;
                for (auto i : idx) correct += oracle->label_of(batch.unlabeled.ids[i]) == gate.decisions[i].pseudo_label;
                return static_cast<double>(correct) / static_cast<double>(idx.size());
            };
            metrics.pl_accuracy = accuracy(accepted);
            metrics.consensus_accuracy = accuracy(consensus);
            metrics.disagreement_accuracy = accuracy(disagreement);
        }

        if (use_unlabeled) {
            // (4) strong forward
            std::vector<Tensor> strong_features;
            for (std::size_t m = 0; m < M; ++m) strong_features.push_back(model.encode(m, batch.unlabeled.strong[m]));
            const auto strong_preds = model.predict_heads(strong_features);

            // (5) consensus consistency
            if (w.lambda_cdcr > 0.0) terms.cdcr = losses::loss_cdcr(strong_preds, consensus, labels_of(consensus));
            // (6) disagreement-aware robust loss
            if (w.lambda_dar > 0.0) {
                terms.dar = losses::loss_dar(weak_preds, strong_preds, disagreement, labels_of(disagreement), config.q,
                                             config.dar_kind, config.dar_views);
            }
            // (7) translations and prototype alignment
            if (w.lambda_cmpa > 0.0) {
                std::vector<std::size_t> accepted_domains;
                for (auto i : accepted) accepted_domains.push_back(batch.unlabeled.domains[i]);
                const auto cmpa = build_cmpa_batch(model, weak_features, strong_features, accepted, labels_of(accepted),
                                                   std::move(accepted_domains), config.cmpa);
                terms.cmpa = prototypes::loss_cmpa(state.bank, cmpa, config.cmpa).loss;
            }
        }
    }

    // (8) total and update
    const auto objective = losses::total_objective(terms, w);
    metrics.loss = objective.breakdown;
    if (!finite(objective.breakdown)) throw NumericError(state.step, objective.breakdown);
    const auto grads = diff::backward(objective.total, state.model.parameters());
    diff::adamw_step(state.model.parameters(), grads, state.optimizer);
    ++state.step;
    return metrics;
}

double evaluate(const model::Model& model, const data::TestPool& pool, std::optional<MissingModality> missing) {
    if (pool.samples.empty()) throw std::invalid_argument("evaluate: empty test pool");
    diff::NoGradGuard no_grad;
    const std::size_t M = model.config().num_modalities;
    if (missing && missing->modality >= M) throw std::out_of_range("evaluate: missing modality out of range");
    constexpr std::size_t kChunk = 256;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < pool.samples.size(); start += kChunk) {
        const std::size_t end = std::min(pool.samples.size(), start + kChunk);
        std::vector<const data::ModalityInputs*> rows;
        for (std::size_t i = start; i < end; ++i) rows.push_back(&pool.samples[i].inputs);
        const auto inputs = stack(rows, M);
        std::vector<Tensor> features(M);
        std::map<std::size_t, Tensor> available;
        for (std::size_t m = 0; m < M; ++m) {
            if (missing && missing->modality == m) continue;
            features[m] = model.encode(m, inputs[m]);
            available.emplace(m, features[m]);
        }
        if (missing) features[missing->modality] = model.impute_missing(available, missing->modality, missing->mode);
        const auto preds = model.predict_heads(features);
        const auto probs = preds.fused_probs.data();
        const std::size_t C = preds.fused_probs.cols();
        for (std::size_t i = start; i < end; ++i) {
            const auto row = probs.subspan((i - start) * C, C);
            correct += gating::argmax(row) == pool.labels[i];
        }
    }
    return static_cast<double>(correct) / static_cast<double>(pool.samples.size());
}

PseudoLabelStats pseudo_label_metrics(std::span<const gating::GateDecision> decisions,
                                      std::span<const std::size_t> hidden_labels) {
    if (decisions.size() != hidden_labels.size()) {
        throw std::invalid_argument("pseudo_label_metrics: decisions and labels differ in length");
    }
    PseudoLabelStats out;
    std::size_t accepted = 0, correct = 0;
    for (std::size_t i = 0; i < decisions.size(); ++i) {
        if (!decisions[i].accepted()) continue;
        ++accepted;
        correct += decisions[i].pseudo_label == hidden_labels[i];
    }
    if (accepted > 0) out.accuracy = static_cast<double>(correct) / static_cast<double>(accepted);
    if (!decisions.empty()) out.utilization = static_cast<double>(accepted) / static_cast<double>(decisions.size());
    return out;
}

std::optional<double> post_warmup_mean(const std::vector<StepMetrics>& metrics, double warmup_fraction,
                                       std::optional<double> StepMetrics::*field) {
    const auto first = static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(metrics.size())));
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = first; i < metrics.size(); ++i) {
        if (const auto& v = metrics[i].*field) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

TargetRun run_target(const ExperimentConfig& config, std::uint64_t seed, std::size_t target) {
    config.validate();
    data::TaskSpec spec = config.task;
    spec.seed = config.task.seed + seed;
    const auto task = data::make_task(spec);
    const auto datasets = data::sample_split(task, config.label_budget(), config.pool_per_class, seed);
    const auto split = data::leave_one_out(datasets, target);
    const data::LabelOracle oracle(split.sources);

    auto state = make_train_state(config, mix(seed, data::hash_tag("model-init")));
    state.target_domain = target;

    TargetRun run;
    run.target = target;
    run.metrics.reserve(config.steps);
    const auto run_key = mix(seed, target);
    for (std::size_t step = 0; step < config.steps; ++step) {
        const auto batch = assemble_batch(split.sources, config, mix(run_key, step));
        run.metrics.push_back(train_step(state, batch, config, &oracle));
        if (config.eval_interval > 0 && (step + 1) % config.eval_interval == 0 && step + 1 < config.steps) {
            const double acc = evaluate(state.model, split.target);
            run.accuracy_curve.emplace_back(step + 1, acc);
            spdlog::debug("seed {} target {} step {}: accuracy {:.4f}", seed, target, step + 1, acc);
        }
    }
    run.accuracy = evaluate(state.model, split.target);
    run.accuracy_curve.emplace_back(config.steps, run.accuracy);
    if (config.evaluate_missing) {
        for (std::size_t m = 0; m < config.task.num_modalities; ++m) {
            for (auto mode : {model::ImputeMode::zero, model::ImputeMode::translate}) {
                run.missing.push_back({m, mode, evaluate(state.model, split.target, MissingModality{m, mode})});
            }
        }
    }
    run.consensus_precision = post_warmup_mean(run.metrics, config.warmup_fraction, &StepMetrics::consensus_accuracy);
    run.disagreement_precision =
        post_warmup_mean(run.metrics, config.warmup_fraction, &StepMetrics::disagreement_accuracy);
    spdlog::info("{} seed {} target {}: accuracy {:.4f}", config.variant, seed, target, run.accuracy);
    return run;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::size_t jobs) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const auto targets = config.target_domains();

    struct Job {
        std::size_t seed_index;
        std::size_t target_index;
    };
    std::vector<Job> queue;
    for (std::size_t s = 0; s < config.seeds.size(); ++s)
        for (std::size_t t = 0; t < targets.size(); ++t) queue.push_back({s, t});

    std::vector<std::vector<TargetRun>> results(config.seeds.size(), std::vector<TargetRun>(targets.size()));
    std::vector<std::vector<double>> seconds(config.seeds.size(), std::vector<double>(targets.size(), 0.0));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (std::size_t j = next++; j < queue.size(); j = next++) {
            const auto [s, t] = queue[j];
            try {
                const auto t0 = std::chrono::steady_clock::now();
                results[s][t] = run_target(config, config.seeds[s], targets[t]);
                seconds[s][t] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = queue.size();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, queue.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);

    ExperimentReport report;
    report.config = config;
    std::vector<double> means;
    for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        RunReport run;
        run.seed = config.seeds[s];
        run.targets = std::move(results[s]);
        double sum = 0.0;
        for (const auto& t : run.targets) sum += t.accuracy;
        run.mean_accuracy = sum / static_cast<double>(run.targets.size());
        run.wall_clock_seconds = std::accumulate(seconds[s].begin(), seconds[s].end(), 0.0);
        means.push_back(run.mean_accuracy);
        report.runs.push_back(std::move(run));
    }
    report.mean_accuracy = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - report.mean_accuracy) * (m - report.mean_accuracy);
    report.std_accuracy = std::sqrt(var / static_cast<double>(means.size()));
    report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace ssmdg::train
