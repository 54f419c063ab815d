#pragma once

#include "auscsed/model.hpp"

namespace auscsed {

/// Bias-corrected Adam. Moment tensors mirror the learnable parameters.
struct AdamState {
    TensorMap m;
    TensorMap v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState init(const ModelWeights& weights);
};

/// One update: m,v moving averages, bias correction, then
/// w -= lr * m_hat / (sqrt(v_hat) + eps). BN running stats are untouched.
void adam_step(ModelWeights& weights, const GradientMap& grads, AdamState& state,
               double lr);

} // namespace auscsed
