#include "nsfc/error.hpp"
#include "nsfc/metrics.hpp"
#include "nsfc/toy2d.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace nsfc;
using namespace nsfc::toy2d;

namespace {

constexpr double kDepth = 0.003;

double cell_centre(const Profile1D& p, int k, int n_rays) { return -0.5 * p.extent + (k + 0.5) * p.extent / n_rays; }

Profile1D bump(int n, double a, double width)
{
    Profile1D p = Profile1D::flat(n);
    for (int j = 0; j < n; ++j) {
        const double x = p.node_x(j);
        if (std::abs(x) < 0.5 * width) p.heights[j] = a * std::cos(M_PI * x / width);
    }
    return p;
}

} // namespace

TEST_CASE("flat profiles pass rays straight through")
{
    const Profile1D p = Profile1D::flat(33);
    const std::vector<double> pts = trace2d(p, 40, kDepth);
    REQUIRE(pts.size() == 40);
    for (int k = 0; k < 40; ++k) CHECK(pts[k] == doctest::Approx(cell_centre(p, k, 40)).epsilon(1e-14));
}

TEST_CASE("symmetric profiles give mirror-symmetric screen points")
{
    const Profile1D p = bump(65, 1e-3, 0.02);
    const std::vector<double> pts = trace2d(p, 64, kDepth);
    REQUIRE(pts.size() == 64);
    for (int k = 0; k < 32; ++k) CHECK(std::abs(pts[k] + pts[63 - k]) < 1e-9);
}

TEST_CASE("a constant ramp shifts every ray by the two-interface Snell offset")
{
    const double slope = 0.05;
    Profile1D p = Profile1D::flat(21);
    for (int j = 0; j < 21; ++j) p.heights[j] = 1e-3 + slope * (p.node_x(j) + 0.025);

    // Incidence angle equals the surface tilt; the ray bends towards the
    // inward normal (+x for a rising ramp) and again at the flat bottom.
    const double theta_i = std::atan(slope);
    const double theta_t = std::asin(std::sin(theta_i) / p.ior);
    const double inside = theta_i - theta_t;
    const double outside = std::asin(p.ior * std::sin(inside));

    const auto rays = trace_rays(p, 16, kDepth);
    REQUIRE(rays.size() == 16);
    for (int k = 0; k < 16; ++k) {
        const double x = cell_centre(p, k, 16);
        const double z = p.base_thickness + 1e-3 + slope * (x + 0.025);
        const double expect = x + z * std::tan(inside) + kDepth * std::tan(outside);
        CHECK(rays[k].entry_x == doctest::Approx(x).epsilon(1e-14));
        CHECK(rays[k].surface_z == doctest::Approx(z).epsilon(1e-12));
        CHECK(rays[k].screen_x == doctest::Approx(expect).epsilon(1e-12));
    }
}

// Slope 20: the bottom interface sees 1.5 sin(45.5 deg) > 1.
TEST_CASE("steep slopes are lost to total internal reflection")
{
    Profile1D p = Profile1D::flat(11);
    for (int j = 0; j < 11; ++j) p.heights[j] = 20.0 * (p.node_x(j) + 0.025);
    CHECK(trace2d(p, 10, kDepth).empty());
}

TEST_CASE("trace2d_vjp matches central differences")
{
    // A raised base keeps the central differences above zero height.
    Profile1D p = bump(33, 8e-4, 0.015);
    for (double& h : p.heights) h += 2e-4;
    const int n_rays = 48;
    const std::vector<double> base = trace2d(p, n_rays, kDepth);
    std::vector<double> w(base.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::sin(0.7 * static_cast<double>(k)) + 0.3;

    const std::vector<double> g = trace2d_vjp(p, n_rays, kDepth, w);
    REQUIRE(g.size() == p.heights.size());
    auto functional = [&](const Profile1D& q) {
        const auto pts = trace2d(q, n_rays, kDepth);
        REQUIRE(pts.size() == w.size());
        double s = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * pts[k];
        return s;
    };
    double num = 0.0, den = 0.0;
    const double h = 1e-7;
    for (int j = 0; j < p.size(); ++j) {
        Profile1D plus = p, minus = p;
        plus.heights[j] += h;
        minus.heights[j] -= h;
        const double fd = (functional(plus) - functional(minus)) / (2.0 * h);
        num += (fd - g[j]) * (fd - g[j]);
        den += fd * fd;
    }
    CHECK(den > 0.0);
    CHECK(std::sqrt(num / den) < 0.01);

    CHECK_THROWS_AS((void)trace2d_vjp(p, n_rays, kDepth, std::vector<double>(3, 1.0)), Error);
}

TEST_CASE("optimising towards the current caustic keeps the loss at zero")
{
    const Profile1D p = bump(33, 5e-4, 0.02);
    HausdorffOptions opt;
    opt.n_rays = 48;
    const HausdorffRun run = optimize_hausdorff(trace2d(p, opt.n_rays, opt.screen_depth), p, 20, opt);
    REQUIRE(run.loss.size() == 21);
    CHECK(run.loss.front() == 0.0);
    CHECK(run.loss.back() < 1e-5);
}

TEST_CASE("the demonstration")
{
    const DemoResult demo = run_demo();
    const std::vector<double>& loss = demo.run.loss;
    REQUIRE(loss.size() == static_cast<std::size_t>(kDemoSteps) + 1);

    SUBCASE("the Hausdorff distance drops by at least 90 percent")
    {
        CHECK(demo.final_hausdorff <= 0.1 * demo.initial_hausdorff);
        CHECK(demo.initial_hausdorff == loss.front());
        CHECK(demo.final_hausdorff == loss.back());
    }
    SUBCASE("while the profile stays far from the truth")
    {
        CHECK(demo.initial_l_rel == doctest::Approx(1.0));
        CHECK(demo.final_l_rel > 0.5 * demo.initial_l_rel);
    }
    SUBCASE("the 50-step windowed surrogate loss never rises")
    {
        // The surrogate is the objective being descended; the exact distance
        // plateaus with small jitter once converged.
        const std::vector<double>& sur = demo.run.surrogate;
        REQUIRE(sur.size() == static_cast<std::size_t>(kDemoSteps));
        double previous = 1e300;
        for (std::size_t start = 0; start + 50 <= sur.size(); start += 50) {
            double mean = 0.0;
            for (std::size_t i = start; i < start + 50; ++i) mean += sur[i];
            mean /= 50.0;
            CHECK(mean <= previous);
            previous = mean;
        }
    }
    SUBCASE("heights remain non-negative") { CHECK_NOTHROW(demo.run.profile.validate()); }
    SUBCASE("panels")
    {
        const Grid g = draw_panels(demo, 32, kDepth, 64);
        CHECK(g.channels == 3);
        CHECK(g.rows == 48);
        CHECK(g.cols > 3 * 64);
        const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
        CHECK(*lo >= 0.0);
        CHECK(*hi <= 1.0);
        CHECK(*lo < *hi);
        CHECK_THROWS_AS((void)draw_panels(demo, 32, kDepth, 8), Error);
    }
}
