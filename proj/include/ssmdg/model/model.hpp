#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssmdg/diff/tensor.hpp"

namespace ssmdg::model {

using diff::Real;
using diff::Tensor;

struct ModelConfig {
    std::size_t num_modalities = 2;
    std::vector<std::size_t> input_dims{24, 24};
    std::vector<std::size_t> feature_dims{32, 32};
    std::size_t encoder_hidden = 64;
    std::size_t translator_hidden = 64;
    std::size_t num_classes = 7;
    std::uint64_t init_seed = 0;

    void validate() const;
    std::size_t fused_dim() const;
};

/// Probability vectors of every head for one sample and one view.
struct HeadProbs {
    std::vector<std::vector<Real>> unimodal;  // [modality][class]
    std::vector<Real> fused;
};

/// Per-sample predictions: labeled samples carry only the weak view.
struct PredictionSet {
    HeadProbs weak;
    std::vector<HeadProbs> strong;  // empty or exactly one
};

/// Batched forward results for one view.
struct BatchPredictions {
    std::vector<Tensor> features;        // [modality] -> [n, d_m]
    std::vector<Tensor> unimodal_probs;  // [modality] -> [n, C]
    Tensor fused_probs;                  // [n, C]

    std::size_t size() const { return fused_probs.rows(); }
    /// Heads in fixed order: unimodal heads by modality, then fused.
    std::vector<Tensor> heads() const;
    HeadProbs row(std::size_t i) const;
};

enum class ImputeMode { zero, translate };

/// Per-modality encoders (affine-ReLU-affine), unimodal softmax heads, a
/// fusion head over concatenated features, and a two-layer ReLU translator for
/// every ordered modality pair.
class Model {
public:
    explicit Model(ModelConfig config);
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    /// Deep copy with independent parameter storage.
    Model clone() const;

    const ModelConfig& config() const noexcept { return config_; }
    diff::ParameterSet& parameters() noexcept { return params_; }
    const diff::ParameterSet& parameters() const noexcept { return params_; }

    /// [n, input_dim_m] -> [n, d_m]
    Tensor encode(std::size_t modality, const Tensor& input) const;
    /// Softmax outputs of every head. `features` holds one [n, d_m] tensor per modality.
    BatchPredictions predict_heads(std::span<const Tensor> features) const;
    /// [n, d_from] -> [n, d_to]
    Tensor translate(std::size_t from, std::size_t to, const Tensor& feature) const;
    /// Mean of translations into `target` from every other modality in `sources`.
    Tensor translate_into(std::size_t target, const std::map<std::size_t, Tensor>& sources) const;
    /// Stand-in feature for a missing modality.
    Tensor impute_missing(const std::map<std::size_t, Tensor>& available, std::size_t missing, ImputeMode mode) const;
    /// Encode every modality and run all heads.
    BatchPredictions forward(std::span<const Tensor> inputs) const;

private:
    Tensor dense(const std::string& prefix, const Tensor& x) const;

    ModelConfig config_;
    diff::ParameterSet params_;
};

Model init_model(const ModelConfig& config);

/// Number of scalars a two-layer translator holds.
std::size_t translator_parameter_count(std::size_t from_dim, std::size_t hidden, std::size_t to_dim);

}  // namespace ssmdg::model
