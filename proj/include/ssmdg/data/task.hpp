#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace ssmdg::data {

/// Row-major dense matrix used by the generator. Generator numerics are
/// always 64-bit regardless of the training precision.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    static Matrix identity(std::size_t n);
    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::vector<double> apply(const std::vector<double>& x) const;
    Matrix transpose() const;
    Matrix operator*(const Matrix& rhs) const;
};

struct TaskSpec {
    std::size_t num_modalities = 2;
    std::size_t num_classes = 7;
    std::size_t num_domains = 3;
    std::vector<std::size_t> input_dims{24, 24};
    /// Latent coordinates seen by each modality.
    std::size_t latent_dim = 8;
    double class_separation = 3.5;
    double domain_shift_scale = 1.0;
    double modality_correlation = 0.5;
    double noise_sigma = 0.1;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument naming the first violated range.
    void validate() const;
};

class InfeasibleTaskError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DomainTransform {
    Matrix linear;
    Matrix inverse;
    std::vector<double> offset;
    std::vector<double> singular_values;
};

/// Generative model behind the benchmark. Every sample draws a latent
/// vector around its class anchor; each modality sees the shared latent block
/// plus its own private block, embeds it through a fixed mixing map, and
/// each domain applies its own affine transform on top. Domain 0 is the
/// reference domain with the identity transform.
struct SyntheticTask {
    TaskSpec spec;
    std::size_t shared_dims = 0;
    std::size_t private_dims = 0;
    std::vector<std::vector<double>> anchors;            // [class][full latent]
    std::vector<Matrix> mixing;                          // [modality] input_dim x latent_dim
    std::vector<std::vector<DomainTransform>> transforms;  // [domain][modality]

    std::size_t full_latent_dim() const { return shared_dims + spec.num_modalities * private_dims; }
    /// Full-latent coordinates read by modality m, in the order they enter the mixing map.
    std::vector<std::size_t> modality_coordinates(std::size_t m) const;
    /// Inputs of every modality for a latent draw in domain k.
    std::vector<std::vector<double>> render(const std::vector<double>& latent, std::size_t domain) const;
};

/// Within-class spread of the latent draws (isotropic, per coordinate).
inline constexpr double kLatentSigma = 1.0;
inline constexpr std::size_t kAnchorAttempts = 20000;
inline constexpr double kMaxConditionNumber = 100.0;

SyntheticTask make_task(const TaskSpec& spec);

double condition_number(const DomainTransform& t);

}  // namespace ssmdg::data
