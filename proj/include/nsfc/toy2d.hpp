#pragma once

#include "nsfc/grid.hpp"

#include <filesystem>
#include <vector>

namespace nsfc::toy2d {

// 1D height profile on a slab: nodes at x_j = -extent/2 + j*extent/(n-1),
// linear height in between. Slopes are central differences at the nodes
// (one-sided at the ends), interpolated linearly.
struct Profile1D
{
    std::vector<double> heights; // meters above the slab
    double extent = 0.05;
    double base_thickness = 0.003;
    double ior = 1.5;

    [[nodiscard]] static Profile1D flat(int n, double extent = 0.05, double base_thickness = 0.003, double ior = 1.5);
    [[nodiscard]] int size() const noexcept { return static_cast<int>(heights.size()); }
    [[nodiscard]] double spacing() const noexcept { return extent / (size() - 1); }
    [[nodiscard]] double node_x(int j) const noexcept { return -0.5 * extent + j * spacing(); }
    [[nodiscard]] double height_at(double x) const;
    [[nodiscard]] double slope_at(double x) const;
    void validate() const;
};

struct Ray2d
{
    double entry_x = 0.0; // where the vertical ray meets the top surface
    double surface_z = 0.0;
    double bottom_x = 0.0;
    double screen_x = 0.0;
};

// Vertical rays through cell centres x_k = -extent/2 + (k + 1/2) extent/n_rays,
// refracted at the profile and at the flat bottom z = 0, ending on the
// screen line z = -screen_depth. TIR rays are dropped; order follows x_k.
[[nodiscard]] std::vector<Ray2d> trace_rays(const Profile1D& p, int n_rays, double screen_depth);
[[nodiscard]] std::vector<double> trace2d(const Profile1D& p, int n_rays, double screen_depth);

// Jacobian-vector product: d(sum_k w_k screen_x_k)/d heights for the rays
// that survive; w must have one entry per surviving ray.
[[nodiscard]] std::vector<double> trace2d_vjp(const Profile1D& p, int n_rays, double screen_depth,
                                              const std::vector<double>& w);

struct HausdorffOptions
{
    int n_rays = 64;
    double screen_depth = 0.003; // the screen sits at -d
    double lr = 3e-5;            // Adam step, meters
    double lr_end = 1e-7;        // decays geometrically towards this
    double tau_start = 1e-3;     // softmax/softmin temperature, meters
    double tau_end = 1e-7;
    double tau = 1e-7;           // floor of the softmin temperature
};

struct HausdorffRun
{
    Profile1D profile;
    std::vector<double> loss;      // exact Hausdorff before each step and after the last
    std::vector<double> surrogate; // soft Hausdorff at each step's temperature
};

// Adam on the soft Hausdorff distance between traced points and target
// points, heights projected to >= 0 after every step; temperature and step
// size decay geometrically to their end values.
[[nodiscard]] HausdorffRun optimize_hausdorff(const std::vector<double>& target_pts, const Profile1D& init, int steps,
                                              const HausdorffOptions& options = {});

// Narrow bump whose ray fan crosses before the screen; the ground truth of
// the demonstration.
[[nodiscard]] Profile1D demo_truth(int n = 64);

struct DemoResult
{
    Profile1D truth;
    Profile1D init;
    HausdorffRun run;
    double initial_hausdorff = 0.0;
    double final_hausdorff = 0.0;
    double initial_l_rel = 0.0;
    double final_l_rel = 0.0;
};

inline constexpr int kDemoSteps = 2000;

[[nodiscard]] DemoResult run_demo(int steps = kDemoSteps, const HausdorffOptions& options = {}, int n = 64);

// Three side-by-side panels (truth, flat start, optimised), each showing
// the profile and its ray fan, as an RGB grid with values in [0, 1].
[[nodiscard]] Grid draw_panels(const DemoResult& demo, int n_rays, double screen_depth, int panel_px = 320);

} // namespace nsfc::toy2d
