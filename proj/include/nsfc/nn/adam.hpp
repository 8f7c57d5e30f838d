#pragma once

#include "nsfc/nn/network.hpp"

#include <cstdint>

namespace nsfc::nn {

struct AdamState
{
    ParamList m;
    ParamList v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    [[nodiscard]] static AdamState for_params(const ParamList& params);
};

// One bias-corrected Adam update; moments are created on first use.
void adam_step(ParamList& params, const ParamList& grads, AdamState& state, double lr);

} // namespace nsfc::nn
