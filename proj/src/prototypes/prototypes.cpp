#include "ssmdg/prototypes/prototypes.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

#include "ssmdg/diff/ops.hpp"

namespace ssmdg::prototypes {

namespace ops = ssmdg::diff;

PrototypeBank::PrototypeBank(std::vector<std::size_t> feature_dims, std::size_t num_classes, std::size_t num_domains,
                             double alpha)
    : dims_(std::move(feature_dims)), classes_(num_classes), domains_(num_domains), alpha_(alpha) {
    if (dims_.empty() || classes_ == 0 || domains_ == 0) throw std::invalid_argument("PrototypeBank: empty extent");
    if (!(alpha_ >= 0.0 && alpha_ < 1.0)) throw std::invalid_argument("PrototypeBank: alpha must lie in [0, 1)");
    for (auto d : dims_)
        if (d == 0) throw std::invalid_argument("PrototypeBank: zero feature dim");
    cells_.resize(dims_.size() * classes_ * domains_);
    initialized_.assign(cells_.size(), 0);
    for (std::size_t m = 0; m < dims_.size(); ++m)
        for (std::size_t c = 0; c < classes_; ++c)
            for (std::size_t k = 0; k < domains_; ++k) cells_[index(m, c, k)].assign(dims_[m], Real(0));
}

std::size_t PrototypeBank::index(std::size_t m, std::size_t c, std::size_t k) const {
    if (m >= dims_.size() || c >= classes_ || k >= domains_) {
        throw std::out_of_range("PrototypeBank: cell (" + std::to_string(m) + ", " + std::to_string(c) + ", " +
                                std::to_string(k) + ") out of range");
    }
    return (m * classes_ + c) * domains_ + k;
}

bool PrototypeBank::initialized(std::size_t m, std::size_t c, std::size_t k) const {
    return initialized_[index(m, c, k)] != 0;
}

std::span<const Real> PrototypeBank::cell(std::size_t m, std::size_t c, std::size_t k) const {
    const auto i = index(m, c, k);
    if (!initialized_[i]) return {};
    return cells_[i];
}

void PrototypeBank::set(std::size_t m, std::size_t c, std::size_t k, std::span<const Real> value) {
    const auto i = index(m, c, k);
    if (value.size() != dims_[m]) {
        throw diff::ShapeError("PrototypeBank: modality " + std::to_string(m) + " expects dim " +
                               std::to_string(dims_[m]) + ", got " + std::to_string(value.size()));
    }
    cells_[i].assign(value.begin(), value.end());
    initialized_[i] = 1;
}

void PrototypeBank::blend(std::size_t m, std::size_t c, std::size_t k, std::span<const Real> mean, double alpha) {
    const auto i = index(m, c, k);
    if (mean.size() != dims_[m]) {
        throw diff::ShapeError("PrototypeBank: modality " + std::to_string(m) + " expects dim " +
                               std::to_string(dims_[m]) + ", got " + std::to_string(mean.size()));
    }
    if (!initialized_[i]) {
        set(m, c, k, mean);
        return;
    }
    auto& mu = cells_[i];
    for (std::size_t j = 0; j < mu.size(); ++j) {
        mu[j] = static_cast<Real>(alpha * static_cast<double>(mu[j]) + (1.0 - alpha) * static_cast<double>(mean[j]));
    }
}

std::size_t PrototypeBank::initialized_count() const {
    std::size_t n = 0;
    for (auto f : initialized_) n += f;
    return n;
}

std::vector<Real> PrototypeBank::flat_values() const {
    std::vector<Real> out;
    for (const auto& c : cells_) out.insert(out.end(), c.begin(), c.end());
    return out;
}

std::vector<std::uint8_t> PrototypeBank::flat_flags() const { return initialized_; }

void PrototypeBank::load_flat(std::span<const Real> values, std::span<const std::uint8_t> flags) {
    if (flags.size() != initialized_.size()) throw std::invalid_argument("PrototypeBank: flag count mismatch");
    std::size_t expected = 0;
    for (const auto& c : cells_) expected += c.size();
    if (values.size() != expected) throw std::invalid_argument("PrototypeBank: value count mismatch");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
                  values.begin() + static_cast<std::ptrdiff_t>(offset + cells_[i].size()), cells_[i].begin());
        offset += cells_[i].size();
        initialized_[i] = flags[i] ? 1 : 0;
    }
}

void ema_update(PrototypeBank& bank, std::span<const Observation> observations, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("ema_update: alpha must lie in [0, 1)");
    // Validate everything before touching the bank.
    std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::pair<std::vector<double>, std::size_t>> sums;
    for (const auto& o : observations) {
        if (o.modality >= bank.num_modalities() || o.cls >= bank.num_classes() || o.domain >= bank.num_domains()) {
            throw std::out_of_range("ema_update: observation cell out of range");
        }
        if (o.feature.size() != bank.dim(o.modality)) {
            throw diff::ShapeError("ema_update: modality " + std::to_string(o.modality) + " feature has dim " +
                                   std::to_string(o.feature.size()) + ", expected " +
                                   std::to_string(bank.dim(o.modality)));
        }
        auto& [sum, count] = sums[{o.modality, o.cls, o.domain}];
        if (sum.empty()) sum.assign(o.feature.size(), 0.0);
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += static_cast<double>(o.feature[j]);
        ++count;
    }
    for (const auto& [key, entry] : sums) {
        const auto& [sum, count] = entry;
        std::vector<Real> mean(sum.size());
        for (std::size_t j = 0; j < sum.size(); ++j) mean[j] = static_cast<Real>(sum[j] / static_cast<double>(count));
        bank.blend(std::get<0>(key), std::get<1>(key), std::get<2>(key), mean, alpha);
    }
}

void ema_update(PrototypeBank& bank, std::span<const Observation> observations) {
    ema_update(bank, observations, bank.alpha());
}

void ema_update(PrototypeBank& bank, std::span<const Tensor> features, std::span<const std::size_t> classes,
                std::span<const std::size_t> domains) {
    if (features.size() != bank.num_modalities()) throw std::invalid_argument("ema_update: one tensor per modality");
    if (classes.size() != domains.size()) throw std::invalid_argument("ema_update: classes/domains length mismatch");
    std::vector<Observation> obs;
    for (std::size_t m = 0; m < features.size(); ++m) {
        const auto& f = features[m];
        if (f.rank() != 2 || f.rows() != classes.size()) {
            throw diff::ShapeError("ema_update: modality " + std::to_string(m) + " feature shape " +
                                   diff::shape_str(f.shape()));
        }
        const auto d = f.cols();
        for (std::size_t i = 0; i < classes.size(); ++i) {
            obs.push_back({m, classes[i], domains[i], f.data().subspan(i * d, d)});
        }
    }
    ema_update(bank, obs, bank.alpha());
}

std::optional<std::vector<Real>> cross_domain_avg(const PrototypeBank& bank, std::size_t m, std::size_t c,
                                                  std::size_t k) {
    if (k >= bank.num_domains()) throw std::out_of_range("cross_domain_avg: domain out of range");
    std::vector<double> sum(bank.dim(m), 0.0);
    std::size_t count = 0;
    for (std::size_t other = 0; other < bank.num_domains(); ++other) {
        if (other == k || !bank.initialized(m, c, other)) continue;
        const auto mu = bank.cell(m, c, other);
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += static_cast<double>(mu[j]);
        ++count;
    }
    if (count == 0) return std::nullopt;
    std::vector<Real> out(sum.size());
    for (std::size_t j = 0; j < sum.size(); ++j) out[j] = static_cast<Real>(sum[j] / static_cast<double>(count));
    return out;
}

namespace {

void check_batch(const PrototypeBank& bank, const CmpaBatch& batch, const CmpaSwitches& sw) {
    const std::size_t M = bank.num_modalities();
    const std::size_t n = batch.size();
    if (batch.domains.size() != n) throw std::invalid_argument("loss_cmpa: domains and pseudo-labels differ in length");
    auto check_set = [&](const std::vector<Tensor>& set, const char* what) {
        if (set.size() != M) throw std::invalid_argument(std::string("loss_cmpa: ") + what + " needs one tensor per modality");
        for (std::size_t m = 0; m < M; ++m) {
            if (set[m].rank() != 2 || set[m].rows() != n || set[m].cols() != bank.dim(m)) {
                throw diff::ShapeError(std::string("loss_cmpa: ") + what + " modality " + std::to_string(m) +
                                       " has shape " + diff::shape_str(set[m].shape()));
            }
        }
    };
    const bool weak = sw.views != losses::ViewSet::strong;
    const bool strong = sw.views != losses::ViewSet::weak;
    if (weak) check_set(batch.weak, "weak features");
    if (strong) check_set(batch.strong, "strong features");
    if (sw.translated && weak) check_set(batch.weak_translated, "weak translated features");
    if (sw.translated && strong) check_set(batch.strong_translated, "strong translated features");
    for (std::size_t i = 0; i < n; ++i) {
        if (batch.pseudo_labels[i] >= bank.num_classes() || batch.domains[i] >= bank.num_domains()) {
            throw std::out_of_range("loss_cmpa: pseudo-label or domain out of range");
        }
    }
}

}  // namespace

CmpaResult loss_cmpa(const PrototypeBank& bank, const CmpaBatch& batch, const CmpaSwitches& switches) {
    CmpaResult result;
    const std::size_t n = batch.size();
    if (n == 0) {
        result.loss = Tensor::scalar(Real(0));
        return result;
    }
    check_batch(bank, batch, switches);
    const std::size_t M = bank.num_modalities();

    // Targets per (modality, row): the own-domain prototype and the cross-domain average.
    struct Targets {
        std::vector<std::size_t> rows;
        std::vector<Real> values;
    };
    std::vector<Targets> own(M), other(M);
    std::vector<bool> contributes(n, false);
    for (std::size_t m = 0; m < M; ++m) {
        std::map<std::pair<std::size_t, std::size_t>, std::optional<std::vector<Real>>> avg_cache;
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = batch.pseudo_labels[i];
            const auto k = batch.domains[i];
            if (bank.initialized(m, c, k)) {
                const auto mu = bank.cell(m, c, k);
                own[m].rows.push_back(i);
                own[m].values.insert(own[m].values.end(), mu.begin(), mu.end());
                contributes[i] = true;
            }
            if (!switches.cross_domain) continue;
            auto it = avg_cache.find({c, k});
            if (it == avg_cache.end()) it = avg_cache.emplace(std::pair{c, k}, cross_domain_avg(bank, m, c, k)).first;
            if (it->second) {
                other[m].rows.push_back(i);
                other[m].values.insert(other[m].values.end(), it->second->begin(), it->second->end());
                contributes[i] = true;
            }
        }
    }

    std::vector<const std::vector<Tensor>*> sources;
    if (switches.views != losses::ViewSet::strong) {
        sources.push_back(&batch.weak);
        if (switches.translated) sources.push_back(&batch.weak_translated);
    }
    if (switches.views != losses::ViewSet::weak) {
        sources.push_back(&batch.strong);
        if (switches.translated) sources.push_back(&batch.strong_translated);
    }

    Tensor total;
    auto accumulate = [&](const Tensor& features, const Targets& t, std::size_t m) {
        if (t.rows.empty()) return;
        const Tensor target = Tensor::constant({t.rows.size(), bank.dim(m)}, t.values);
        const Tensor part = ops::sum_all(ops::sq_l2_dist(ops::select_rows(features, t.rows), target));
        total = total.defined() ? ops::add(total, part) : part;
        result.present_terms += t.rows.size();
    };
    for (const auto* set : sources) {
        for (std::size_t m = 0; m < M; ++m) {
            accumulate((*set)[m], own[m], m);
            accumulate((*set)[m], other[m], m);
        }
    }

    for (bool b : contributes) result.contributing_samples += b;
    if (!total.defined()) {
        result.loss = Tensor::scalar(Real(0));
        return result;
    }
    result.loss = ops::scale(total, Real(1) / static_cast<Real>(result.contributing_samples));
    return result;
}

}  // namespace ssmdg::prototypes
