#pragma once

#include <functional>
#include <string>

#include "ssmdg/diff/tensor.hpp"

namespace ssmdg::diff {

using LossFn = std::function<Tensor(const ParameterSet&)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares backward() against central differences over every coordinate of
/// every parameter. The error per coordinate is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
/// Parameter values are restored before returning.
GradCheckResult finite_diff_report(const LossFn& loss_fn, ParameterSet& params, double eps = 1e-5);

double finite_diff_check(const LossFn& loss_fn, ParameterSet& params, double eps = 1e-5);

}  // namespace ssmdg::diff
