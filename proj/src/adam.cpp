#include "clclsa/adam.hpp"

#include "clclsa/errors.hpp"

#include <cmath>
#include <string>

namespace clclsa {

Adam::Adam(const ParameterSet& params, AdamOptions options)
    : options_(options), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::step(ParameterSet& params, const std::vector<Tensor>& grads, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw InvalidArgument("adam: learning rate must be positive, got " + std::to_string(lr));
    }
    if (grads.size() != params.size() || m_.size() != params.size()) {
        throw ShapeError("adam: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        require_same_shape(params.value(i), grads[i], "adam");
    }

    ++t_;
    const auto& o = options_;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto theta = params.value(i).values();
        auto g = grads[i].values();
        auto m = m_[i].values();
        auto v = v_[i].values();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
            v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            theta[k] -= lr * m_hat / (std::sqrt(v_hat) + o.eps);
        }
    }
}

} // namespace clclsa
