#include "ssmdg/model/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ssmdg/data/rng.hpp"
#include "ssmdg/diff/ops.hpp"

namespace ssmdg::model {

namespace ops = ssmdg::diff;

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelConfig: " + what); };
    if (num_modalities < 2) fail("num_modalities must be >= 2");
    if (input_dims.size() != num_modalities) fail("input_dims length must equal num_modalities");
    if (feature_dims.size() != num_modalities) fail("feature_dims length must equal num_modalities");
    for (auto d : input_dims)
        if (d == 0) fail("input_dims must be positive");
    for (auto d : feature_dims)
        if (d == 0) fail("feature_dims must be positive");
    if (encoder_hidden == 0 || translator_hidden == 0) fail("hidden widths must be positive");
    if (num_classes < 2) fail("num_classes must be >= 2");
}

std::size_t ModelConfig::fused_dim() const {
    return std::accumulate(feature_dims.begin(), feature_dims.end(), std::size_t{0});
}

std::vector<Tensor> BatchPredictions::heads() const {
    std::vector<Tensor> out = unimodal_probs;
    out.push_back(fused_probs);
    return out;
}

HeadProbs BatchPredictions::row(std::size_t i) const {
    auto slice = [i](const Tensor& t) {
        const auto c = t.cols();
        auto d = t.data();
        return std::vector<Real>(d.begin() + static_cast<std::ptrdiff_t>(i * c),
                                 d.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    };
    HeadProbs out;
    for (const auto& p : unimodal_probs) out.unimodal.push_back(slice(p));
    out.fused = slice(fused_probs);
    return out;
}

namespace {

// Weights ~ U(-b, b) with b = sqrt(3 / fan_in), biases zero.
void add_dense(diff::ParameterSet& params, const std::string& prefix, std::size_t fan_in, std::size_t fan_out,
               std::uint64_t seed) {
    data::Rng rng(seed, "init", data::hash_tag(prefix));
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    std::vector<Real> w(fan_in * fan_out);
    for (auto& v : w) v = static_cast<Real>(rng.uniform(-bound, bound));
    params.add(Tensor::parameter(prefix + ".weight", {fan_in, fan_out}, std::move(w)));
    params.add(Tensor::parameter(prefix + ".bias", {fan_out}, std::vector<Real>(fan_out, Real(0))));
}

}  // namespace

Model::Model(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto seed = config_.init_seed;
    const std::size_t M = config_.num_modalities;
    for (std::size_t m = 0; m < M; ++m) {
        add_dense(params_, "encoder" + std::to_string(m) + ".layer1", config_.input_dims[m], config_.encoder_hidden, seed);
        add_dense(params_, "encoder" + std::to_string(m) + ".layer2", config_.encoder_hidden, config_.feature_dims[m], seed);
    }
    for (std::size_t m = 0; m < M; ++m) {
        add_dense(params_, "head" + std::to_string(m), config_.feature_dims[m], config_.num_classes, seed);
    }
    add_dense(params_, "fusion", config_.fused_dim(), config_.num_classes, seed);
    for (std::size_t from = 0; from < M; ++from) {
        for (std::size_t to = 0; to < M; ++to) {
            if (from == to) continue;
            const auto prefix = "translator" + std::to_string(from) + "to" + std::to_string(to);
            add_dense(params_, prefix + ".layer1", config_.feature_dims[from], config_.translator_hidden, seed);
            add_dense(params_, prefix + ".layer2", config_.translator_hidden, config_.feature_dims[to], seed);
        }
    }
}

Model Model::clone() const {
    Model copy(config_);
    for (const auto& p : params_) {
        auto dst = copy.params_.at(p.name()).mutable_data();
        std::copy(p.data().begin(), p.data().end(), dst.begin());
    }
    return copy;
}

Tensor Model::dense(const std::string& prefix, const Tensor& x) const {
    return ops::add(ops::matmul(x, params_.at(prefix + ".weight")), params_.at(prefix + ".bias"));
}

Tensor Model::encode(std::size_t modality, const Tensor& input) const {
    if (modality >= config_.num_modalities) throw std::out_of_range("encode: modality out of range");
    if (input.rank() != 2 || input.cols() != config_.input_dims[modality]) {
        throw diff::ShapeError("encode: modality " + std::to_string(modality) + " expects input dim " +
                               std::to_string(config_.input_dims[modality]) + ", got shape " +
                               diff::shape_str(input.shape()));
    }
    const auto prefix = "encoder" + std::to_string(modality);
    return dense(prefix + ".layer2", ops::relu(dense(prefix + ".layer1", input)));
}

BatchPredictions Model::predict_heads(std::span<const Tensor> features) const {
    const std::size_t M = config_.num_modalities;
    if (features.size() != M) {
        throw std::invalid_argument("predict_heads: " + std::to_string(features.size()) + " features for " +
                                    std::to_string(M) + " modalities (impute missing modalities first)");
    }
    BatchPredictions out;
    for (std::size_t m = 0; m < M; ++m) {
        if (!features[m].defined()) {
            throw std::invalid_argument("predict_heads: missing feature for modality " + std::to_string(m));
        }
        if (features[m].rank() != 2 || features[m].cols() != config_.feature_dims[m]) {
            throw diff::ShapeError("predict_heads: modality " + std::to_string(m) + " feature shape " +
                                   diff::shape_str(features[m].shape()));
        }
        out.features.push_back(features[m]);
        out.unimodal_probs.push_back(ops::softmax_last_axis(dense("head" + std::to_string(m), features[m])));
    }
    const Tensor fused = ops::concat_last_axis(features);
    out.fused_probs = ops::softmax_last_axis(dense("fusion", fused));
    return out;
}

Tensor Model::translate(std::size_t from, std::size_t to, const Tensor& feature) const {
    if (from == to) throw std::invalid_argument("translate: source and target modality are both " + std::to_string(from));
    if (from >= config_.num_modalities || to >= config_.num_modalities) {
        throw std::out_of_range("translate: modality out of range");
    }
    if (feature.rank() != 2 || feature.cols() != config_.feature_dims[from]) {
        throw diff::ShapeError("translate: expected feature dim " + std::to_string(config_.feature_dims[from]) +
                               ", got shape " + diff::shape_str(feature.shape()));
    }
    const auto prefix = "translator" + std::to_string(from) + "to" + std::to_string(to);
    return dense(prefix + ".layer2", ops::relu(dense(prefix + ".layer1", feature)));
}

Tensor Model::translate_into(std::size_t target, const std::map<std::size_t, Tensor>& sources) const {
    Tensor sum;
    std::size_t count = 0;
    for (const auto& [m, z] : sources) {
        if (m == target) continue;
        Tensor t = translate(m, target, z);
        sum = sum.defined() ? ops::add(sum, t) : t;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("translate_into: no source modality available");
    return count == 1 ? sum : ops::scale(sum, Real(1) / static_cast<Real>(count));
}

Tensor Model::impute_missing(const std::map<std::size_t, Tensor>& available, std::size_t missing,
                             ImputeMode mode) const {
    if (available.empty()) throw std::invalid_argument("impute_missing: no available modalities");
    if (available.count(missing)) {
        throw std::invalid_argument("impute_missing: modality " + std::to_string(missing) + " is available");
    }
    if (missing >= config_.num_modalities) throw std::out_of_range("impute_missing: modality out of range");
    if (mode == ImputeMode::zero) {
        const std::size_t n = available.begin()->second.rows();
        return Tensor::zeros({n, config_.feature_dims[missing]});
    }
    return translate_into(missing, available);
}

BatchPredictions Model::forward(std::span<const Tensor> inputs) const {
    if (inputs.size() != config_.num_modalities) {
        throw std::invalid_argument("forward: expected one input per modality");
    }
    std::vector<Tensor> features;
    features.reserve(inputs.size());
    for (std::size_t m = 0; m < inputs.size(); ++m) features.push_back(encode(m, inputs[m]));
    return predict_heads(features);
}

Model init_model(const ModelConfig& config) { return Model(config); }

std::size_t translator_parameter_count(std::size_t from_dim, std::size_t hidden, std::size_t to_dim) {
    return from_dim * hidden + hidden + hidden * to_dim + to_dim;
}

}  // namespace ssmdg::model
