#pragma once

#include "nsfc/grid.hpp"
#include "nsfc/heightfield.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace nsfc {

using Vec3 = Eigen::Vector3d;

// Sellmeier dispersion n^2 = 1 + sum B_i l^2 / (l^2 - C_i), l in micrometers.
struct SpectralIor
{
    std::array<double, 3> b{0.6961663, 0.4079426, 0.8974794};
    std::array<double, 3> c{0.0684043 * 0.0684043, 0.1162414 * 0.1162414, 9.896161 * 9.896161}; // um^2

    // Fused silica (Malitson).
    [[nodiscard]] static SpectralIor fused_silica() { return {}; }
};

[[nodiscard]] double ior(const SpectralIor& spec, double wavelength_nm);

struct SceneParams
{
    int field_res = 64;        // n
    int sensor_res = 128;      // m
    std::int64_t n_l = 100000; // light paths
    std::vector<double> wavelengths{610.0, 530.0, 430.0}; // nm
    double smoothing = 16.0;   // footprint scale s; s = 16 gives a one-pixel sigma
    double emission_angle = 0.0; // cone half-angle (rad), 0 = collimated
    std::vector<double> radiosity{1.0, 1.0, 1.0}; // W/m^2 per wavelength
    Vec3 light_pos{0.0, 0.0, 1.0};
    Vec3 screen_pos{0.0, 0.0, -1e-6};
    Extent substrate_extent{0.05, 0.05};
    double base_thickness = 0.003;
    SpectralIor glass = SpectralIor::fused_silica();

    [[nodiscard]] int n_w() const noexcept { return static_cast<int>(wavelengths.size()); }
    [[nodiscard]] double pixel_pitch_x() const noexcept { return substrate_extent.x / sensor_res; }
    [[nodiscard]] double pixel_pitch_y() const noexcept { return substrate_extent.y / sensor_res; }
    [[nodiscard]] double emitted_power(int channel) const noexcept
    {
        return radiosity[static_cast<std::size_t>(channel)] * substrate_extent.x * substrate_extent.y;
    }

    void validate() const;

    // n = 128, m = 512, n_l = 1e6.
    [[nodiscard]] static SceneParams full_scale();
    // n = 64, m = 128, n_l = 1e5.
    [[nodiscard]] static SceneParams desk();
};

struct Irradiance
{
    Grid values; // n_w x m x m, W/m^2
    double pitch_x = 0.0;
    double pitch_y = 0.0;

    [[nodiscard]] double pixel_area() const noexcept { return pitch_x * pitch_y; }
    [[nodiscard]] int channels() const noexcept { return values.channels; }
    [[nodiscard]] int resolution() const noexcept { return values.rows; }

    [[nodiscard]] static Irradiance zeros(const SceneParams& scene);
    // Wraps a stored grid, taking pitch from the scene extent.
    [[nodiscard]] static Irradiance from_grid(Grid values, const SceneParams& scene);
};

// Per-channel power bookkeeping of one render (watts).
struct RenderStats
{
    std::vector<double> emitted;
    std::vector<double> deposited;
    std::vector<double> offscreen;
    std::vector<double> tir;
};

// Unit normal (pointing to +z) of the surface z = d + h(x, y), with h
// bilinearly interpolated between nodes.
[[nodiscard]] Vec3 surface_normal(const HeightField& field, Point2 p);

// Vector Snell refraction; eta = n_incident / n_transmitted. The normal may
// face either side. Returns nullopt on total internal reflection.
[[nodiscard]] std::optional<Vec3> refract(const Vec3& dir, const Vec3& normal, double eta);

// Anisotropic footprint of one photon on the sensor.
struct Footprint
{
    double sigma = 1.0; // minor sigma, pixels
    Eigen::Vector2d major_axis{1.0, 0.0};
    double major_sigma = 1.0;
};

[[nodiscard]] Footprint footprint_for(const Vec3& exit_dir, double smoothing);

// Deposits `energy` watts centred at `center` (pixel units, pixel (r, c) has
// its centre at (c + 0.5, r + 0.5)) into one channel of `accum`. The kernel
// is a 3-sigma truncated Gaussian shifted to reach zero at the rim, and is
// normalised over all covered pixels, on-screen or not. Returns the energy
// that fell outside the sensor.
double splat(Irradiance& accum, int channel, Eigen::Vector2d center, const Vec3& exit_dir, double energy,
             double smoothing);

[[nodiscard]] Irradiance render(const HeightField& field, const SceneParams& scene, std::uint64_t seed,
                                RenderStats* stats = nullptr);

struct BackwardOptions
{
    // When false the footprint shape is frozen and only its position is
    // differentiated (a biased but cheaper gradient).
    bool footprint_shape = true;
};

// dL/dh for a loss whose gradient w.r.t. the rendered irradiance is dL_dE.
// Re-traces the same photons as render(field, scene, seed).
[[nodiscard]] Grid render_backward(const HeightField& field, const SceneParams& scene, std::uint64_t seed,
                                   const Grid& dL_dE, const BackwardOptions& options = {});

// Central differences of fn around x, one entry at a time.
[[nodiscard]] Grid finite_diff_gradient(const std::function<double(const Grid&)>& fn, const Grid& x, double eps);

// Central differences of loss(render(h)) with the same seed on both sides.
[[nodiscard]] Grid finite_diff_gradient(const HeightField& field, const SceneParams& scene, std::uint64_t seed,
                                        const std::function<double(const Irradiance&)>& loss, double eps);

} // namespace nsfc
