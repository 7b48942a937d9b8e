#include "ssmdg/diff/adamw.hpp"

#include <cmath>

namespace ssmdg::diff {

void adamw_step(ParameterSet& params, const GradientMap& grads, AdamWState& state) {
    if (grads.size() != params.size()) {
        throw std::invalid_argument("adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                                    std::to_string(params.size()) + " parameters");
    }
    for (const auto& p : params) {
        auto it = grads.find(p.name());
        if (it == grads.end()) throw std::invalid_argument("adamw_step: no gradient for parameter " + p.name());
        if (it->second.shape() != p.shape()) {
            throw ShapeError("adamw_step: gradient shape " + shape_str(it->second.shape()) + " for parameter " +
                             p.name() + " of shape " + shape_str(p.shape()));
        }
    }

    const auto& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(h.beta1, t);
    const double bc2 = 1.0 - std::pow(h.beta2, t);

    for (auto& p : params) {
        auto theta = p.mutable_data();
        const auto g = grads.at(p.name()).data();
        auto& m = state.first_moment[p.name()];
        auto& v = state.second_moment[p.name()];
        if (m.size() != theta.size()) m.assign(theta.size(), Real(0));
        if (v.size() != theta.size()) v.assign(theta.size(), Real(0));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g[i];
            m[i] = static_cast<Real>(h.beta1 * m[i] + (1.0 - h.beta1) * gi);
            v[i] = static_cast<Real>(h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi);
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            const double update = m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * theta[i];
            theta[i] = static_cast<Real>(theta[i] - h.lr * update);
        }
    }
}

}  // namespace ssmdg::diff
