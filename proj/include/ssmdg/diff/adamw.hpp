#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssmdg/diff/tensor.hpp"

namespace ssmdg::diff {

struct AdamWHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-3;
};

struct AdamWState {
    AdamWHyper hyper;
    std::uint64_t step = 0;
    std::map<std::string, std::vector<Real>> first_moment;
    std::map<std::string, std::vector<Real>> second_moment;
};

/// One decoupled-weight-decay Adam update, in place on `params`:
///   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
/// with bias correction taken at the incremented step count.
void adamw_step(ParameterSet& params, const GradientMap& grads, AdamWState& state);

}  // namespace ssmdg::diff
