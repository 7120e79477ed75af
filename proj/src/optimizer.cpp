#include "embver/optimizer.hpp"

#include <cmath>
#include <string>

namespace embver {

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) {
        throw ValidationError("optimizer: learning_rate must be positive, got " +
                              std::to_string(learning_rate));
    }
    if (!(weight_decay >= 0.0)) {
        throw ValidationError("optimizer: weight_decay must be non-negative, got " +
                              std::to_string(weight_decay));
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ValidationError("optimizer: betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw ValidationError("optimizer: epsilon must be positive");
    }
}

OptimizerState::OptimizerState(const ParamSet& params)
    : first_moment_(params.zeros_like()), second_moment_(params.zeros_like()) {}

void adam_step(ParamSet& params, const ParamSet& grads, OptimizerState& state,
               const AdamConfig& config) {
    config.validate();
    if (!params.same_layout(grads)) {
        throw ShapeError("adam_step: gradient layout does not mirror the parameters");
    }
    if (!params.same_layout(state.first_moment_)) {
        throw ShapeError("adam_step: optimizer state was created for a different parameter set");
    }

    state.step_count_ += 1;
    const double t = static_cast<double>(state.step_count_);
    const double bias1 = 1.0 - std::pow(config.beta1, t);
    const double bias2 = 1.0 - std::pow(config.beta2, t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat& p = params.tensors()[i].value;
        const Mat& g = grads.tensors()[i].value;
        if (!g.allFinite()) {
            throw NumericError("adam_step: non-finite gradient for parameter '" +
                               grads.tensors()[i].name + "'");
        }
        Mat& m = state.first_moment_.tensors()[i].value;
        Mat& v = state.second_moment_.tensors()[i].value;
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
        const Mat m_hat = m / bias1;
        const Mat v_hat = v / bias2;
        p.array() -= config.learning_rate *
                     (m_hat.array() / (v_hat.array().sqrt() + config.epsilon) +
                      config.weight_decay * p.array());
    }
}

}  // namespace embver
