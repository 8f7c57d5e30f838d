#include "nsfc/nn/adam.hpp"

#include "nsfc/error.hpp"

#include <cmath>

namespace nsfc::nn {

AdamState AdamState::for_params(const ParamList& params)
{
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.size(), 0.0);
        s.v.emplace_back(p.size(), 0.0);
    }
    return s;
}

void adam_step(ParamList& params, const ParamList& grads, AdamState& state, double lr)
{
    require(params.size() == grads.size(), "adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) state = [&] {
        AdamState fresh = AdamState::for_params(params);
        fresh.beta1 = state.beta1;
        fresh.beta2 = state.beta2;
        fresh.eps = state.eps;
        return fresh;
    }();
    require(state.m.size() == params.size(), "adam_step: state does not match parameters");

    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& p = params[t];
        const auto& g = grads[t];
        auto& m = state.m[t];
        auto& v = state.v[t];
        require(p.size() == g.size() && p.size() == m.size(), "adam_step: tensor shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

} // namespace nsfc::nn
