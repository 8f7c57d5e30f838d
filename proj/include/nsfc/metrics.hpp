#pragma once

#include "nsfc/grid.hpp"
#include "nsfc/heightfield.hpp"

#include <optional>
#include <span>
#include <vector>

namespace nsfc {

// Mean squared difference over every entry (all channels and pixels).
[[nodiscard]] double l_irrad(const Grid& estimate, const Grid& target);
// 2 (E - E_target) / N.
[[nodiscard]] Grid l_irrad_backward(const Grid& estimate, const Grid& target);

// ||h - h_true||_2 / ||h_true||_2 on elevations above the substrate.
[[nodiscard]] double l_rel(const Grid& estimate, const Grid& truth);
[[nodiscard]] double l_rel(const HeightField& estimate, const HeightField& truth);

struct SsimParams
{
    int window = 11;
    double gaussian_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    // Defaults to the maximum of the reference (second) image.
    std::optional<double> dynamic_range;

    void validate() const;
};

// Mean local SSIM over all window positions that fit inside the image
// ("valid" filtering), Gaussian-weighted. Single-channel grids.
[[nodiscard]] double ssim(const Grid& a, const Grid& b, const SsimParams& params = {});

// Point sets are flattened: point i occupies [i*dim, (i+1)*dim).
[[nodiscard]] double hausdorff(std::span<const double> a, std::span<const double> b, int dim = 1);

struct SoftHausdorff
{
    double value = 0.0;
    std::vector<double> grad_a; // d value / d a
};

// Log-sum-exp relaxation: soft minima of pairwise distances at temperature
// tau, soft maxima over them and over the two directions at outer_tau
// (0 means tau). A large outer_tau spreads the gradient over all points,
// Chamfer-like. With both equal, |soft - exact| <= tau * log(2 |A| |B|).
[[nodiscard]] SoftHausdorff soft_hausdorff(std::span<const double> a, std::span<const double> b, int dim,
                                           double tau, double outer_tau = 0.0);

} // namespace nsfc
