#include "ssmdg/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ssmdg::diff {

namespace {

double evaluate(const LossFn& loss_fn, const ParameterSet& params) {
    NoGradGuard no_grad;
    const double value = static_cast<double>(loss_fn(params).item());
    if (!std::isfinite(value)) throw NonFiniteError("finite_diff_check: non-finite loss evaluation");
    return value;
}

}  // namespace

GradCheckResult finite_diff_report(const LossFn& loss_fn, ParameterSet& params, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");

    const Tensor loss = loss_fn(params);
    if (!std::isfinite(static_cast<double>(loss.item()))) {
        throw NonFiniteError("finite_diff_check: non-finite loss evaluation");
    }
    GradientMap analytic;
    if (loss.has_graph()) {
        analytic = backward(loss, params);
    } else {
        for (const auto& p : params) analytic.emplace(p.name(), Tensor::zeros(p.shape()));
    }

    GradCheckResult result;
    for (auto& param : params) {
        auto values = param.mutable_data();
        const auto grad = analytic.at(param.name()).data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Real saved = values[i];
            values[i] = saved + static_cast<Real>(eps);
            const double up = evaluate(loss_fn, params);
            values[i] = saved - static_cast<Real>(eps);
            const double down = evaluate(loss_fn, params);
            values[i] = saved;

            const double numeric = (up - down) / (2.0 * eps);
            const double a = static_cast<double>(grad[i]);
            const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            if (result.worst_parameter.empty() || err > result.max_relative_error) {
                result = {err, param.name(), i, a, numeric};
            }
        }
    }
    return result;
}

double finite_diff_check(const LossFn& loss_fn, ParameterSet& params, double eps) {
    return finite_diff_report(loss_fn, params, eps).max_relative_error;
}

}  // namespace ssmdg::diff
