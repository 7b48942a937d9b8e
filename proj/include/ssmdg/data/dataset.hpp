#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ssmdg/data/task.hpp"

namespace ssmdg::data {

using ModalityInputs = std::vector<std::vector<double>>;  // [modality][coordinate]

struct Sample {
    /// Provenance id: (domain << 32) | index within the domain pool.
    std::uint64_t id = 0;
    std::size_t domain = 0;
    ModalityInputs inputs;
};

inline constexpr std::uint64_t make_sample_id(std::size_t domain, std::size_t index) {
    return (static_cast<std::uint64_t>(domain) << 32) | static_cast<std::uint64_t>(index);
}

class LabelOracle;
struct LeaveOneOutSplit;

/// One source domain: a small labeled subset plus a larger unlabeled subset.
/// Unlabeled ground truth is private; only LabelOracle (metrics) and the
/// leave-one-out builder (which turns a held-out domain into a test pool) can
/// read it.
class DomainDataset {
public:
    DomainDataset() = default;
    DomainDataset(std::size_t domain, std::vector<Sample> labeled, std::vector<std::size_t> labels,
                  std::vector<Sample> unlabeled, std::vector<std::size_t> hidden_labels);

    std::size_t domain() const noexcept { return domain_; }
    const std::vector<Sample>& labeled() const noexcept { return labeled_; }
    const std::vector<std::size_t>& labels() const noexcept { return labels_; }
    const std::vector<Sample>& unlabeled() const noexcept { return unlabeled_; }
    std::size_t n_labeled() const noexcept { return labeled_.size(); }
    std::size_t n_unlabeled() const noexcept { return unlabeled_.size(); }

private:
    friend class LabelOracle;
    friend LeaveOneOutSplit leave_one_out(const std::vector<DomainDataset>&, std::size_t);
    friend struct DatasetFileAccess;

    std::size_t domain_ = 0;
    std::vector<Sample> labeled_;
    std::vector<std::size_t> labels_;
    std::vector<Sample> unlabeled_;
    std::vector<std::size_t> hidden_labels_;
};

/// Labeled evaluation pool (a whole held-out domain).
struct TestPool {
    std::size_t domain = 0;
    std::vector<Sample> samples;
    std::vector<std::size_t> labels;
};

struct LeaveOneOutSplit {
    std::vector<DomainDataset> sources;
    TestPool target;
};

/// Labels per class per domain: an absolute count, or a fraction of the
/// per-class pool.
struct LabelBudget {
    enum class Kind { count, fraction };
    Kind kind = Kind::count;
    double value = 5.0;

    static LabelBudget count(std::size_t n) { return {Kind::count, static_cast<double>(n)}; }
    static LabelBudget fraction(double f) { return {Kind::fraction, f}; }
    /// Labeled count for a class with `pool` generated samples.
    std::size_t labeled_for(std::size_t pool) const;
};

/// Generates `pool_per_class` samples per (domain, class), carves a
/// class-balanced labeled subset out of each pool and leaves the rest
/// unlabeled.
std::vector<DomainDataset> sample_split(const SyntheticTask& task, LabelBudget budget, std::size_t pool_per_class,
                                        std::uint64_t seed);

enum class Strength { weak, strong };

/// Label-preserving view. Weak: N(0, noise_sigma) noise plus, with
/// probability 1/2, a sign flip of one coordinate. Strong: N(0, 3*noise_sigma)
/// noise plus zeroing of a contiguous block of floor(d/4) coordinates.
ModalityInputs augment(const Sample& sample, Strength strength, double noise_sigma, std::uint64_t seed);

struct SampleViews {
    ModalityInputs raw;
    ModalityInputs weak;
    ModalityInputs strong;
};

SampleViews make_views(const Sample& sample, double noise_sigma, std::uint64_t seed);

/// Holds out `target` as the test pool (labeled and unlabeled merged, true
/// labels restored); the other domains become training sources.
LeaveOneOutSplit leave_one_out(const std::vector<DomainDataset>& datasets, std::size_t target);

/// Ground truth for unlabeled samples, keyed by provenance id. Diagnostic
/// metrics only.
class LabelOracle {
public:
    explicit LabelOracle(const std::vector<DomainDataset>& datasets);
    std::optional<std::size_t> label_of(std::uint64_t id) const;

private:
    std::unordered_map<std::uint64_t, std::size_t> labels_;
};

/// Accuracy of the generative-model classifier (undo the domain transform,
/// project onto each modality's latent coordinates, nearest anchor) on raw
/// inputs and on strong views of a fresh labeled draw from every domain.
struct ViewRetention {
    double raw_accuracy = 0.0;
    double strong_accuracy = 0.0;
    double retention() const { return raw_accuracy > 0.0 ? strong_accuracy / raw_accuracy : 0.0; }
};

ViewRetention strong_view_retention(const SyntheticTask& task, std::size_t per_class, std::uint64_t seed);

std::size_t nearest_anchor_class(const SyntheticTask& task, const ModalityInputs& inputs, std::size_t domain);

}  // namespace ssmdg::data
