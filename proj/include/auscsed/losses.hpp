#pragma once

#include <vector>

#include "auscsed/labels.hpp"
#include "auscsed/tensor.hpp"

namespace auscsed {

/// Loss value plus dL/dp with the layout of the posterior matrix.
struct LossResult {
    double value = 0.0;
    Tensor grad;
};

/// Frame and class masks; empty vectors mean "all included". The mean runs
/// over cells where both masks are 1; an all-masked input yields loss 0 with
/// zero gradient.
struct LossMask {
    std::vector<uint8_t> frames;
    std::vector<uint8_t> classes;
};

/// Mean binary cross-entropy over unmasked frame-class cells. Probabilities
/// are clipped to [1e-7, 1-1e-7] for numerical safety.
LossResult bce_loss(const FramePosteriors& p, const ActivityMatrix& y,
                    const LossMask& mask = {});

/// Asymmetric focal loss:
///   -[(1-p)^gamma * y * log p + p^zeta * (1-y) * log(1-p)]
/// gamma reweights active cells across classes, zeta reweights the inactive
/// background. Reduces exactly to BCE at gamma = zeta = 0. The focal factors
/// are treated as differentiable in the gradient.
LossResult afl_loss(const FramePosteriors& p, const ActivityMatrix& y, double gamma,
                    double zeta, const LossMask& mask = {});

} // namespace auscsed
