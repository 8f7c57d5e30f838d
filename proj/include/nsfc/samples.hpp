#pragma once

#include "nsfc/heightfield.hpp"
#include "nsfc/render.hpp"

namespace nsfc {

// Low- and high-sample renderings of the same field under the same scene.
struct DenoisePair
{
    HeightField field;
    Irradiance low;
    Irradiance high;
};

// One point-wise supervision example for the updater: current estimate,
// target, dL_irrad/d(source), and the (denoised) caustics of both fields.
struct UpdaterSample
{
    HeightField source;
    HeightField target;
    Grid grad;
    Irradiance e_source;
    Irradiance e_target;
};

} // namespace nsfc
