#include "auscsed/optim.hpp"

#include <cmath>

#include "auscsed/error.hpp"

namespace auscsed {

AdamState AdamState::init(const ModelWeights& weights) {
    AdamState st;
    for (const auto& nt : weights.tensors()) {
        if (!nt.learnable) continue;
        st.m.add(nt.name, Tensor(nt.value.shape()));
        st.v.add(nt.name, Tensor(nt.value.shape()));
    }
    return st;
}

void adam_step(ModelWeights& weights, const GradientMap& grads, AdamState& state,
               double lr) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& nt : weights.tensors()) {
        if (!nt.learnable) continue;
        const Tensor& g = grads.get(nt.name);
        require_same_shape(nt.value, g, nt.name.c_str());
        Tensor& m = state.m.get(nt.name);
        Tensor& v = state.v.get(nt.name);
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            nt.value[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
    weights.note_mutation();
}

} // namespace auscsed
