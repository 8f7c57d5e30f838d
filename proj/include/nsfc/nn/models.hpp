#pragma once

#include "nsfc/heightfield.hpp"
#include "nsfc/nn/network.hpp"
#include "nsfc/render.hpp"

#include <cstdint>
#include <filesystem>

namespace nsfc::nn {

// Applies a one-channel denoiser to every wavelength channel independently.
// The network works on log1p(E); the result is expm1'd and clamped to >= 0.
[[nodiscard]] Irradiance denoise(const Network& net, const Irradiance& e);

// The denoiser is excluded from the backward pass: gradients pass through
// unchanged.
[[nodiscard]] inline Grid denoise_backward_identity(const Grid& dL_dout) { return dL_dout; }

// Heights are fed to and produced by the updater in units of this length.
inline constexpr double kUpdaterHeightScale = 1e-3;

// Stacks [x, g, E_sim, E_target] into the (2 + 2 n_w) x n x n updater input:
// x / kUpdaterHeightScale, g / rms(g), log1p of the caustics average-pooled
// from m x m to n x n.
[[nodiscard]] Tensor updater_input(const Grid& x, const Grid& grad, const Grid& e_sim, const Grid& e_target);

// Step delta in meters; the caller applies x_next = x - delta.
[[nodiscard]] Grid updater_forward(const Network& net, const HeightField& x, const Grid& grad, const Irradiance& e_sim,
                                   const Irradiance& e_target);

struct CheckpointMeta
{
    std::uint64_t seed = 0;
    int epoch = 0;
};

void save_network(const std::filesystem::path& path, const Network& net, const CheckpointMeta& meta = {});
[[nodiscard]] Network load_network(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

} // namespace nsfc::nn
