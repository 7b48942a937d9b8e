#include "ssmdg/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "ssmdg/data/rng.hpp"

namespace ssmdg::data {

DomainDataset::DomainDataset(std::size_t domain, std::vector<Sample> labeled, std::vector<std::size_t> labels,
                             std::vector<Sample> unlabeled, std::vector<std::size_t> hidden_labels)
    : domain_(domain),
      labeled_(std::move(labeled)),
      labels_(std::move(labels)),
      unlabeled_(std::move(unlabeled)),
      hidden_labels_(std::move(hidden_labels)) {
    if (labeled_.size() != labels_.size() || unlabeled_.size() != hidden_labels_.size()) {
        throw std::invalid_argument("DomainDataset: sample/label count mismatch");
    }
    if (labeled_.size() > unlabeled_.size()) {
        throw std::invalid_argument("DomainDataset: labeled subset (" + std::to_string(labeled_.size()) +
                                    ") larger than unlabeled subset (" + std::to_string(unlabeled_.size()) + ")");
    }
}

std::size_t LabelBudget::labeled_for(std::size_t pool) const {
    if (kind == Kind::count) {
        if (value < 0.0 || std::floor(value) != value) {
            throw std::invalid_argument("label count must be a non-negative integer");
        }
        const auto n = static_cast<std::size_t>(value);
        if (n > pool) {
            throw std::invalid_argument("requested " + std::to_string(n) + " labels per class but only " +
                                        std::to_string(pool) + " samples generated per class");
        }
        return n;
    }
    if (!(value >= 0.0 && value <= 1.0)) {
        throw std::invalid_argument("label fraction " + std::to_string(value) + " outside [0,1]");
    }
    return static_cast<std::size_t>(std::floor(value * static_cast<double>(pool) + 1e-9));
}

std::vector<DomainDataset> sample_split(const SyntheticTask& task, LabelBudget budget, std::size_t pool_per_class,
                                        std::uint64_t seed) {
    const auto& spec = task.spec;
    const std::size_t n_labeled = budget.labeled_for(pool_per_class);
    const std::uint64_t stream_seed = splitmix64(seed) ^ spec.seed;
    const std::size_t full = task.full_latent_dim();

    std::vector<DomainDataset> out;
    out.reserve(spec.num_domains);
    for (std::size_t k = 0; k < spec.num_domains; ++k) {
        std::vector<Sample> labeled, unlabeled;
        std::vector<std::size_t> labels, hidden;
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            std::vector<Sample> pool;
            pool.reserve(pool_per_class);
            for (std::size_t i = 0; i < pool_per_class; ++i) {
                const auto id = make_sample_id(k, c * pool_per_class + i);
                Rng rng(stream_seed, "latent", id);
                std::vector<double> latent(full);
                for (std::size_t d = 0; d < full; ++d) latent[d] = task.anchors[c][d] + rng.normal(0.0, kLatentSigma);
                pool.push_back({id, k, task.render(latent, k)});
            }
            Rng pick(stream_seed, "label-select", k, c);
            std::shuffle(pool.begin(), pool.end(), pick.engine());
            for (std::size_t i = 0; i < pool.size(); ++i) {
                if (i < n_labeled) {
                    labeled.push_back(std::move(pool[i]));
                    labels.push_back(c);
                } else {
                    unlabeled.push_back(std::move(pool[i]));
                    hidden.push_back(c);
                }
            }
        }
        std::vector<std::size_t> order(unlabeled.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle(stream_seed, "unlabeled-order", k);
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        std::vector<Sample> shuffled;
        std::vector<std::size_t> shuffled_hidden;
        shuffled.reserve(order.size());
        for (auto i : order) {
            shuffled.push_back(std::move(unlabeled[i]));
            shuffled_hidden.push_back(hidden[i]);
        }
        out.emplace_back(k, std::move(labeled), std::move(labels), std::move(shuffled), std::move(shuffled_hidden));
    }
    return out;
}

ModalityInputs augment(const Sample& sample, Strength strength, double noise_sigma, std::uint64_t seed) {
    const bool strong = strength == Strength::strong;
    Rng rng(seed, strong ? "augment-strong" : "augment-weak", sample.id);
    ModalityInputs view = sample.inputs;
    for (auto& x : view) {
        const double sigma = strong ? 3.0 * noise_sigma : noise_sigma;
        if (sigma > 0.0) {
            for (auto& v : x) v += rng.normal(0.0, sigma);
        }
        const std::size_t d = x.size();
        if (strong) {
            const std::size_t block = d / 4;
            if (block > 0) {
                const std::size_t start = rng.index(d - block + 1);
                std::fill_n(x.begin() + static_cast<std::ptrdiff_t>(start), block, 0.0);
            }
        } else if (rng.bernoulli(0.5)) {
            const std::size_t j = rng.index(d);
            x[j] = -x[j];
        }
    }
    return view;
}

SampleViews make_views(const Sample& sample, double noise_sigma, std::uint64_t seed) {
    return {sample.inputs, augment(sample, Strength::weak, noise_sigma, seed),
            augment(sample, Strength::strong, noise_sigma, seed)};
}

LeaveOneOutSplit leave_one_out(const std::vector<DomainDataset>& datasets, std::size_t target) {
    if (target >= datasets.size()) {
        throw std::out_of_range("leave_one_out: target " + std::to_string(target) + " out of range for " +
                                std::to_string(datasets.size()) + " domains");
    }
    LeaveOneOutSplit split;
    std::unordered_set<std::uint64_t> source_ids;
    for (std::size_t k = 0; k < datasets.size(); ++k) {
        const auto& ds = datasets[k];
        if (k == target) {
            split.target.domain = ds.domain();
            for (std::size_t i = 0; i < ds.labeled_.size(); ++i) {
                split.target.samples.push_back(ds.labeled_[i]);
                split.target.labels.push_back(ds.labels_[i]);
            }
            for (std::size_t i = 0; i < ds.unlabeled_.size(); ++i) {
                split.target.samples.push_back(ds.unlabeled_[i]);
                split.target.labels.push_back(ds.hidden_labels_[i]);
            }
        } else {
            for (const auto& s : ds.labeled_) source_ids.insert(s.id);
            for (const auto& s : ds.unlabeled_) source_ids.insert(s.id);
            split.sources.push_back(ds);
        }
    }
    for (const auto& s : split.target.samples) {
        if (source_ids.count(s.id)) {
            throw std::logic_error("leave_one_out: target sample " + std::to_string(s.id) + " also in a source pool");
        }
    }
    return split;
}

LabelOracle::LabelOracle(const std::vector<DomainDataset>& datasets) {
    for (const auto& ds : datasets) {
        for (std::size_t i = 0; i < ds.unlabeled_.size(); ++i) labels_.emplace(ds.unlabeled_[i].id, ds.hidden_labels_[i]);
    }
}

std::optional<std::size_t> LabelOracle::label_of(std::uint64_t id) const {
    auto it = labels_.find(id);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
}

std::size_t nearest_anchor_class(const SyntheticTask& task, const ModalityInputs& inputs, std::size_t domain) {
    const auto& spec = task.spec;
    const std::size_t full = task.full_latent_dim();
    std::vector<double> latent(full, 0.0);
    std::vector<double> weight(full, 0.0);
    for (std::size_t m = 0; m < spec.num_modalities; ++m) {
        const auto& t = task.transforms[domain][m];
        std::vector<double> centered = inputs[m];
        for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= t.offset[i];
        const auto embedded = t.inverse.apply(centered);
        const auto local = task.mixing[m].transpose().apply(embedded);
        const auto coords = task.modality_coordinates(m);
        for (std::size_t i = 0; i < coords.size(); ++i) {
            latent[coords[i]] += local[i];
            weight[coords[i]] += 1.0;
        }
    }
    for (std::size_t i = 0; i < full; ++i)
        if (weight[i] > 0.0) latent[i] /= weight[i];

    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < task.anchors.size(); ++c) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < full; ++i) d2 += (latent[i] - task.anchors[c][i]) * (latent[i] - task.anchors[c][i]);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = c;
        }
    }
    return best;
}

ViewRetention strong_view_retention(const SyntheticTask& task, std::size_t per_class, std::uint64_t seed) {
    const auto& spec = task.spec;
    std::size_t total = 0, raw_hits = 0, strong_hits = 0;
    for (std::size_t k = 0; k < spec.num_domains; ++k) {
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            for (std::size_t i = 0; i < per_class; ++i) {
                const auto id = make_sample_id(k, c * per_class + i);
                Rng rng(seed, "retention", id);
                std::vector<double> latent(task.full_latent_dim());
                for (std::size_t d = 0; d < latent.size(); ++d) latent[d] = task.anchors[c][d] + rng.normal(0.0, kLatentSigma);
                const Sample sample{id, k, task.render(latent, k)};
                const auto strong = augment(sample, Strength::strong, spec.noise_sigma, seed);
                raw_hits += nearest_anchor_class(task, sample.inputs, k) == c;
                strong_hits += nearest_anchor_class(task, strong, k) == c;
                ++total;
            }
        }
    }
    return {static_cast<double>(raw_hits) / static_cast<double>(total),
            static_cast<double>(strong_hits) / static_cast<double>(total)};
}

}  // namespace ssmdg::data
