// Adam with bias correction over flat parameter vectors. The core step is a
// pure function (new params + new state out); mutating wrappers for the Mlp
// and Gru containers sit on top.
#pragma once

#include <utility>

#include "rlab/common.hpp"
#include "rlab/nn.hpp"

namespace rlab {

struct AdamState {
    Vec m;  // first moment
    Vec v;  // second moment
    std::int64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 3e-4;

    AdamState() = default;
    explicit AdamState(std::size_t n, double lr = 3e-4)
        : m(n, 0.0), v(n, 0.0), learning_rate(lr) {}
};

inline std::pair<Vec, AdamState> adam_step(const AdamState& state, const Vec& params,
                                           const Vec& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size())
        throw DimensionError("adam_step: shape mismatch");

    AdamState next = state;
    next.step_count = state.step_count + 1;
    Vec out = params;
    const double t = static_cast<double>(next.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        next.m[i] = state.beta1 * next.m[i] + (1.0 - state.beta1) * grads[i];
        next.v[i] = state.beta2 * next.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = next.m[i] / bc1;
        const double vhat = next.v[i] / bc2;
        out[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    return {std::move(out), std::move(next)};
}

template <class Net>
inline void adam_update(AdamState& state, Net& net, const Net& grads) {
    const std::size_t n = net.param_count();
    Vec p(n), g(n);
    net.to_flat(p.data());
    grads.to_flat(g.data());
    auto [np, ns] = adam_step(state, p, g);
    net.from_flat(np.data());
    state = std::move(ns);
}

}  // namespace rlab
