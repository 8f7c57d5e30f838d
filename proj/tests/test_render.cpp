#include "nsfc/error.hpp"
#include "nsfc/metrics.hpp"
#include "nsfc/parallel.hpp"
#include "nsfc/render.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace nsfc;

namespace {

double sellmeier_oracle(double nm)
{
    const double l2 = (nm * 1e-3) * (nm * 1e-3);
    const double b[3] = {0.6961663, 0.4079426, 0.8974794};
    const double c[3] = {0.0684043, 0.1162414, 9.896161};
    double n2 = 1.0;
    for (int i = 0; i < 3; ++i) n2 += b[i] * l2 / (l2 - c[i] * c[i]);
    return std::sqrt(n2);
}

SceneParams small_scene(int n, int m, std::int64_t n_l)
{
    SceneParams s;
    s.field_res = n;
    s.sensor_res = m;
    s.n_l = n_l;
    return s;
}

HeightField random_field(const SceneParams& s, std::uint64_t seed)
{
    Rng rng(seed);
    return sample_line_field(rng, LineFieldRanges{}, s.field_res, s.substrate_extent, s.base_thickness).field;
}

// Bilinear height as an independent oracle for the surface normal.
double bilinear(const HeightField& f, double x, double y)
{
    const double u = (x - f.node_x(0)) / f.spacing_x();
    const double v = (y - f.node_y(0)) / f.spacing_y();
    const int j = std::min(static_cast<int>(std::floor(u)), f.size() - 2);
    const int i = std::min(static_cast<int>(std::floor(v)), f.size() - 2);
    const double a = u - j, b = v - i;
    return (1 - a) * (1 - b) * f.at(i, j) + a * (1 - b) * f.at(i, j + 1) + (1 - a) * b * f.at(i + 1, j) +
           a * b * f.at(i + 1, j + 1);
}

double sum_power(const Irradiance& e, int ch)
{
    double s = 0.0;
    for (int r = 0; r < e.resolution(); ++r)
        for (int c = 0; c < e.resolution(); ++c) s += e.values.at(ch, r, c);
    return s * e.pixel_area();
}

struct ExecGuard
{
    Execution saved = execution();
    ~ExecGuard() { set_execution(saved); }
};

} // namespace

TEST_CASE("Sellmeier index of refraction")
{
    const SpectralIor silica = SpectralIor::fused_silica();
    CHECK(ior(silica, 530.0) == doctest::Approx(sellmeier_oracle(530.0)).epsilon(1e-14));
    CHECK(ior(silica, 530.0) == doctest::Approx(1.4607).epsilon(1e-4));

    SpectralIor vacuum;
    vacuum.b = {0.0, 0.0, 0.0};
    CHECK(ior(vacuum, 530.0) == 1.0);

    CHECK(ior(silica, 430.0) > ior(silica, 530.0));
    CHECK(ior(silica, 530.0) > ior(silica, 610.0));

    CHECK_THROWS_AS((void)ior(silica, 0.0), Error);
    CHECK_THROWS_AS((void)ior(silica, 68.4043), Error); // lambda^2 = C_1
}

TEST_CASE("surface normal")
{
    const Extent ext{0.05, 0.05};
    SUBCASE("flat")
    {
        const Vec3 n = surface_normal(HeightField::flat(8, ext, 0.003), {0.001, -0.002});
        CHECK(n.x() == 0.0);
        CHECK(n.y() == 0.0);
        CHECK(n.z() == 1.0);
    }
    SUBCASE("ramp h = c x")
    {
        HeightField f = HeightField::flat(8, ext, 0.003);
        const double c = 0.04;
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) f.at(i, j) = c * (f.node_x(j) + 0.025);
        const Vec3 expected = Vec3(-c, 0.0, 1.0).normalized();
        for (Point2 p : {Point2{0.003, 0.004}, Point2{-0.017, 0.011}}) {
            const Vec3 n = surface_normal(f, p);
            CHECK(n.x() == doctest::Approx(expected.x()).epsilon(1e-12));
            CHECK(std::abs(n.y()) < 1e-12);
            CHECK(n.z() == doctest::Approx(expected.z()).epsilon(1e-12));
        }
    }
    SUBCASE("central differences of the interpolated surface")
    {
        SceneParams s = small_scene(16, 16, 1);
        const HeightField f = random_field(s, 4);
        const double eps = 1e-8;
        for (Point2 p : {Point2{0.0012, -0.0071}, Point2{0.0153, 0.0201}, Point2{-0.0222, 0.0049}}) {
            const double dx = (bilinear(f, p.x + eps, p.y) - bilinear(f, p.x - eps, p.y)) / (2 * eps);
            const double dy = (bilinear(f, p.x, p.y + eps) - bilinear(f, p.x, p.y - eps)) / (2 * eps);
            const Vec3 expected = Vec3(-dx, -dy, 1.0).normalized();
            const Vec3 n = surface_normal(f, p);
            CHECK((n - expected).norm() <= 1e-6 * expected.norm());
        }
    }
    SUBCASE("outside the extent") { CHECK_THROWS_AS((void)surface_normal(HeightField::flat(8, ext, 0.003), {0.03, 0.0}), Error); }
}

TEST_CASE("vector Snell refraction")
{
    const Vec3 down(0, 0, -1);
    const Vec3 up(0, 0, 1);
    SUBCASE("normal incidence is undeviated")
    {
        for (double eta : {1.0 / 1.5, 1.0, 1.5}) {
            const auto t = refract(down, up, eta);
            REQUIRE(t.has_value());
            CHECK((*t - down).norm() < 1e-15);
        }
    }
    SUBCASE("eta = 1 is undeviated")
    {
        const Vec3 d = Vec3(0.3, -0.2, -1.0).normalized();
        const auto t = refract(d, Vec3(0.1, 0.2, 1.0).normalized(), 1.0);
        REQUIRE(t.has_value());
        CHECK((*t - d).norm() < 1e-15);
    }
    SUBCASE("45 degrees air to glass")
    {
        const Vec3 d = Vec3(1.0, 0.0, -1.0).normalized();
        const auto t = refract(d, up, 1.0 / 1.5);
        REQUIRE(t.has_value());
        CHECK(t->x() == doctest::Approx(std::sin(std::numbers::pi / 4) / 1.5).epsilon(1e-14));
        CHECK(t->x() == doctest::Approx(0.4714).epsilon(1e-4));
        CHECK(t->norm() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(t->z() < 0.0);
    }
    SUBCASE("total internal reflection beyond the critical angle")
    {
        const double theta = std::asin(1.0 / 1.5) + 0.01;
        const Vec3 d(std::sin(theta), 0.0, -std::cos(theta));
        CHECK_FALSE(refract(d, up, 1.5).has_value());
    }
    SUBCASE("non-unit input is rejected") { CHECK_THROWS_AS((void)refract(Vec3(0, 0, -2), up, 1.0), Error); }
}

TEST_CASE("splat")
{
    SceneParams s = small_scene(8, 64, 1);
    SUBCASE("zero energy leaves the accumulator untouched")
    {
        Irradiance e = Irradiance::zeros(s);
        CHECK(splat(e, 0, {20.5, 30.5}, Vec3(0.2, 0.1, -1).normalized(), 0.0, 16.0) == 0.0);
        CHECK(e.values == Irradiance::zeros(s).values);
    }
    SUBCASE("vertical exit is isotropic")
    {
        const Footprint fp = footprint_for(Vec3(0, 0, -1), 16.0);
        CHECK(fp.sigma == 1.0);
        CHECK(fp.major_sigma == fp.sigma);
        const Footprint tilted = footprint_for(Vec3(0.6, 0.0, -0.8), 32.0);
        CHECK(tilted.sigma == 2.0);
        CHECK(tilted.major_sigma == doctest::Approx(2.0 / 0.8).epsilon(1e-14));
        CHECK(std::abs(tilted.major_axis.x()) == doctest::Approx(1.0));
    }
    SUBCASE("an on-screen splat deposits exactly its energy")
    {
        for (const Vec3& dir : {Vec3(0, 0, -1), Vec3(0.5, -0.3, -0.8).normalized()}) {
            Irradiance e = Irradiance::zeros(s);
            const double lost = splat(e, 1, {31.37, 29.81}, dir, 2.5e-3, 16.0);
            CHECK(lost == 0.0);
            CHECK(sum_power(e, 1) == doctest::Approx(2.5e-3).epsilon(1e-12));
            CHECK(sum_power(e, 0) == 0.0);
        }
    }
    SUBCASE("a splat over the edge reports the lost energy")
    {
        Irradiance e = Irradiance::zeros(s);
        const double lost = splat(e, 0, {0.2, 10.5}, Vec3(0, 0, -1), 1.0, 16.0);
        CHECK(lost > 0.2);
        CHECK(sum_power(e, 0) + lost == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("render: flat slab")
{
    SceneParams s = small_scene(16, 32, 100000);
    RenderStats st;
    const Irradiance e = render(HeightField::flat(16, s.substrate_extent, s.base_thickness), s, 1, &st);
    REQUIRE(e.channels() == 3);
    // Away from the border every pixel collects the full radiosity.
    for (int ch = 0; ch < 3; ++ch) {
        double mean = 0.0;
        int count = 0;
        for (int r = 4; r < 28; ++r)
            for (int c = 4; c < 28; ++c) {
                mean += e.values.at(ch, r, c);
                ++count;
            }
        CHECK(mean / count == doctest::Approx(1.0).epsilon(0.01));
        CHECK(st.tir[ch] == 0.0);
        CHECK(st.emitted[ch] == doctest::Approx(2.5e-3).epsilon(1e-15));
        CHECK(sum_power(e, ch) == doctest::Approx(2.5e-3).epsilon(0.05));
    }
}

TEST_CASE("render: energy conservation")
{
    SceneParams s = small_scene(32, 64, 30000);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        RenderStats st;
        const Irradiance e = render(random_field(s, seed), s, seed, &st);
        for (int ch = 0; ch < s.n_w(); ++ch) {
            const double total = sum_power(e, ch) + st.offscreen[ch] + st.tir[ch];
            CHECK(total == doctest::Approx(s.emitted_power(ch)).epsilon(1e-6));
            CHECK(sum_power(e, ch) == doctest::Approx(st.deposited[ch]).epsilon(1e-9));
        }
        for (double v : e.values.values) REQUIRE((std::isfinite(v) && v >= 0.0));
    }
}

TEST_CASE("render: determinism")
{
    ExecGuard guard;
    SceneParams s = small_scene(16, 32, 20000);
    const HeightField f = random_field(s, 8);
    set_execution({1, true});
    const Irradiance a = render(f, s, 5);
    const Irradiance b = render(f, s, 5);
    set_execution({3, true});
    const Irradiance c = render(f, s, 5);
    CHECK(a.values == b.values);
    CHECK(a.values == c.values);
    CHECK_FALSE(render(f, s, 6).values == a.values);
}

TEST_CASE("render: noise falls as 1/sqrt(n_l)")
{
    // Variance of independent photons scales exactly as 1/n_l, so quadrupling
    // n_l halves the standard deviation; the measured ratio carries ~1%
    // sampling error at this size.
    SceneParams s = small_scene(16, 64, 10000);
    const HeightField f = random_field(s, 2);
    const auto rms_diff = [&](std::int64_t n_l) {
        SceneParams q = s;
        q.n_l = n_l;
        const Grid a = render(f, q, 100).values, b = render(f, q, 200).values;
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
        return std::sqrt(acc / a.size());
    };
    const double ratio = rms_diff(40000) / rms_diff(10000);
    CHECK(ratio == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("render: invalid geometry")
{
    SceneParams s = small_scene(8, 8, 10);
    s.screen_pos.z() = 0.01;
    CHECK_THROWS_AS(s.validate(), Error);
    CHECK_THROWS_AS((void)render(HeightField::flat(8, s.substrate_extent, s.base_thickness), s, 0), Error);
}

TEST_CASE("finite_diff_gradient")
{
    SUBCASE("exact on a quadratic")
    {
        Grid x(1, 3, 3);
        for (std::size_t i = 0; i < x.size(); ++i) x.values[i] = 0.1 * static_cast<double>(i) - 0.3;
        const auto fn = [](const Grid& g) {
            double s = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) s += (i + 1.0) * g.values[i] * g.values[i] + g.values[i];
            return s;
        };
        const Grid fd = finite_diff_gradient(fn, x, 1e-3);
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(fd.values[i] == doctest::Approx(2.0 * (i + 1.0) * x.values[i] + 1.0).epsilon(1e-8));
    }
    SUBCASE("symmetric field and loss give a symmetric gradient")
    {
        Grid h(1, 6, 6);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j) h.at(0, i, j) = 1e-3 * (1.0 + std::cos(0.7 * (j - 2.5)));
        const Grid g = finite_diff_gradient(
            [](const Grid& x) {
                double acc = 0.0;
                for (int i = 0; i < 6; ++i)
                    for (int j = 0; j < 6; ++j) acc += std::pow(x.at(0, i, j), 3) * (1.0 + std::abs(j - 2.5));
                return acc;
            },
            h, 1e-6);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 3; ++j) CHECK(g.at(0, i, j) == doctest::Approx(g.at(0, i, 5 - j)).epsilon(1e-9));
    }
}

TEST_CASE("render_backward")
{
    SceneParams s = small_scene(8, 32, 1000);
    const HeightField f = random_field(s, 1);

    SUBCASE("zero upstream gradient")
    {
        const Grid g = render_backward(f, s, 3, Grid(3, 32, 32));
        for (double v : g.values) CHECK(v == 0.0);
    }
    SUBCASE("flat field against its own rendering sits at the minimum")
    {
        SceneParams q = small_scene(8, 32, 20000);
        const HeightField flat = HeightField::flat(8, q.substrate_extent, q.base_thickness);
        const Irradiance e = render(flat, q, 4);
        const Grid g0 = render_backward(flat, q, 4, l_irrad_backward(e.values, e.values));
        for (double v : g0.values) CHECK(v == 0.0);
    }
    SUBCASE("matches common-random-number finite differences")
    {
        Rng rng(77);
        const HeightField other =
            sample_line_field(rng, LineFieldRanges{}, 8, s.substrate_extent, s.base_thickness).field;
        const Irradiance target = render(other, s, 99);
        const Irradiance e = render(f, s, 1);
        const Grid g = render_backward(f, s, 1, l_irrad_backward(e.values, target.values));
        const Grid fd = finite_diff_gradient(
            f, s, 1, [&](const Irradiance& x) { return l_irrad(x.values, target.values); }, 1e-7);
        std::vector<std::size_t> idx(fd.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return std::abs(fd.values[a]) > std::abs(fd.values[b]); });
        for (int k = 0; k < 10; ++k) {
            const std::size_t i = idx[k];
            CHECK(std::abs(g.values[i] - fd.values[i]) <= 0.05 * std::abs(fd.values[i]));
        }
    }
    SUBCASE("adjoint consistency with a directional derivative")
    {
        Rng rng(5);
        Grid u(1, 8, 8), v(3, 32, 32);
        for (double& x : u.values) x = rng.uniform(-1.0, 1.0);
        for (double& x : v.values) x = rng.uniform(-1.0, 1.0);
        const Grid g = render_backward(f, s, 2, v);
        double lhs = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) lhs += g.values[i] * u.values[i];
        const double eps = 1e-8;
        const auto shifted = [&](double t) {
            Grid h = f.heights();
            for (std::size_t i = 0; i < h.size(); ++i) h.values[i] += t * u.values[i];
            return render(HeightField(h, f.extent(), f.base_thickness()), s, 2).values;
        };
        const Grid up = shifted(eps), down = shifted(-eps);
        double rhs = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) rhs += v.values[i] * (up.values[i] - down.values[i]) / (2 * eps);
        CHECK(lhs == doctest::Approx(rhs).epsilon(0.05));
    }
    SUBCASE("deterministic across thread counts")
    {
        ExecGuard guard;
        Grid v(3, 32, 32, 1.0);
        set_execution({1, true});
        const Grid a = render_backward(f, s, 2, v);
        set_execution({4, true});
        CHECK(render_backward(f, s, 2, v) == a);
    }
}
