#include "caee/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "caee/errors.hpp"

namespace caee {

AdamState make_adam_state(const ParamSet& params, const AdamOptions& options) {
    AdamState state;
    state.options = options;
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m.push_back(Tensor::zeros_like(params[i].value));
        state.v.push_back(Tensor::zeros_like(params[i].value));
    }
    return state;
}

void adam_step(ParamSet& params, AdamState& state) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("Adam state does not match parameter set");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].grad.same_shape(params[i].value)) {
            throw std::logic_error("parameter " + params.name(i) + " has no gradient buffer");
        }
    }

    const auto& opt = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(opt.beta1, t);
    const double correction2 = 1.0 - std::pow(opt.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto value = params[i].value.data();
        auto grad = params[i].grad.data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t k = 0; k < value.size(); ++k) {
            m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * grad[k];
            v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            value[k] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.epsilon);
        }
    }
}

}  // namespace caee
