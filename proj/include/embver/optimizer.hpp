#pragma once

#include <cstdint>

#include "embver/common.hpp"
#include "embver/tensor.hpp"

namespace embver {

struct AdamConfig {
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

// Adam moment accumulators; layout always mirrors the parameter set the
// state was created from. Fresh state = a fresh optimizer (used when a new
// model version starts training).
class OptimizerState {
public:
    explicit OptimizerState(const ParamSet& params);

    const ParamSet& first_moment() const { return first_moment_; }
    const ParamSet& second_moment() const { return second_moment_; }
    std::int64_t step_count() const { return step_count_; }

private:
    friend void adam_step(ParamSet&, const ParamSet&, OptimizerState&, const AdamConfig&);

    ParamSet first_moment_;
    ParamSet second_moment_;
    std::int64_t step_count_ = 0;
};

// One Adam update with decoupled weight decay:
//   p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p).
// Throws NumericError naming the tensor whose gradient is not finite, and
// ShapeError if grads/state do not mirror params.
void adam_step(ParamSet& params, const ParamSet& grads, OptimizerState& state,
               const AdamConfig& config);

}  // namespace embver
