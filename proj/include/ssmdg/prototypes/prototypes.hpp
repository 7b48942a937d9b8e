#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ssmdg/diff/tensor.hpp"
#include "ssmdg/losses/losses.hpp"

namespace ssmdg::prototypes {

using diff::Real;
using diff::Tensor;

/// EMA class prototypes per (modality, class, domain). Cells start
/// uninitialized; the first update copies the batch mean.
class PrototypeBank {
public:
    PrototypeBank() = default;
    PrototypeBank(std::vector<std::size_t> feature_dims, std::size_t num_classes, std::size_t num_domains,
                  double alpha = 0.9);

    std::size_t num_modalities() const noexcept { return dims_.size(); }
    std::size_t num_classes() const noexcept { return classes_; }
    std::size_t num_domains() const noexcept { return domains_; }
    std::size_t dim(std::size_t m) const { return dims_.at(m); }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    double alpha() const noexcept { return alpha_; }

    bool initialized(std::size_t m, std::size_t c, std::size_t k) const;
    /// Empty span for an uninitialized cell.
    std::span<const Real> cell(std::size_t m, std::size_t c, std::size_t k) const;
    /// Overwrites a cell and marks it initialized.
    void set(std::size_t m, std::size_t c, std::size_t k, std::span<const Real> value);
    /// Blends an initialized cell toward `mean`, or initializes it.
    void blend(std::size_t m, std::size_t c, std::size_t k, std::span<const Real> mean, double alpha);
    std::size_t initialized_count() const;

    /// Flat storage for checkpoints: values in (m, c, k, coordinate) order.
    std::vector<Real> flat_values() const;
    std::vector<std::uint8_t> flat_flags() const;
    void load_flat(std::span<const Real> values, std::span<const std::uint8_t> flags);

    bool operator==(const PrototypeBank&) const = default;

private:
    std::size_t index(std::size_t m, std::size_t c, std::size_t k) const;

    std::vector<std::size_t> dims_;
    std::size_t classes_ = 0;
    std::size_t domains_ = 0;
    double alpha_ = 0.9;
    std::vector<std::vector<Real>> cells_;
    std::vector<std::uint8_t> initialized_;
};

struct Observation {
    std::size_t modality = 0;
    std::size_t cls = 0;
    std::size_t domain = 0;
    std::span<const Real> feature;
};

/// Groups observations by cell and applies one EMA step per non-empty cell.
void ema_update(PrototypeBank& bank, std::span<const Observation> observations, double alpha);
void ema_update(PrototypeBank& bank, std::span<const Observation> observations);
/// Batched form: one [n, d_m] feature tensor per modality with shared labels and domains.
void ema_update(PrototypeBank& bank, std::span<const Tensor> features, std::span<const std::size_t> classes,
                std::span<const std::size_t> domains);

/// Mean of the initialized cells (m, c, k') over k' != k; nullopt when none.
std::optional<std::vector<Real>> cross_domain_avg(const PrototypeBank& bank, std::size_t m, std::size_t c,
                                                  std::size_t k);

struct CmpaSwitches {
    bool cross_domain = true;  // include the distance to the other-domain average
    bool translated = true;    // include translated-feature terms
    losses::ViewSet views = losses::ViewSet::both;
};

/// Features of the accepted unlabeled samples, one row per sample.
struct CmpaBatch {
    std::vector<Tensor> weak;               // [modality] -> [n, d_m]
    std::vector<Tensor> strong;
    std::vector<Tensor> weak_translated;    // empty when translated terms are off
    std::vector<Tensor> strong_translated;
    std::vector<std::size_t> pseudo_labels;
    std::vector<std::size_t> domains;

    std::size_t size() const { return pseudo_labels.size(); }
};

struct CmpaResult {
    Tensor loss;  // [1]
    std::size_t present_terms = 0;
    std::size_t contributing_samples = 0;
};

/// Sum of squared distances from every present (feature, target) pair,
/// divided by the number of samples contributing at least one term.
/// Targets whose cell is uninitialized are dropped. Empty input -> 0.
CmpaResult loss_cmpa(const PrototypeBank& bank, const CmpaBatch& batch, const CmpaSwitches& switches = {});

}  // namespace ssmdg::prototypes
