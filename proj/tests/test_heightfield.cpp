#include "nsfc/error.hpp"
#include "nsfc/heightfield.hpp"
#include "nsfc/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace nsfc;

namespace {

const Extent kExtent{0.05, 0.05};
constexpr double kBase = 0.003;

double max_height(const HeightField& f)
{
    return *std::max_element(f.heights().values.begin(), f.heights().values.end());
}

} // namespace

TEST_CASE("node coordinates span the extent")
{
    const HeightField f = HeightField::flat(11, kExtent, kBase);
    CHECK(f.node_x(0) == doctest::Approx(-0.025));
    CHECK(f.node_x(10) == doctest::Approx(0.025));
    CHECK(f.node_y(5) == doctest::Approx(0.0));
    CHECK(f.spacing_x() == doctest::Approx(0.005));
}

TEST_CASE("cosine line profile")
{
    // Horizontal line along y = 0 through row 5 of an 11x11 grid (5 mm spacing).
    HeightField f = HeightField::flat(11, kExtent, kBase);
    const LineSpec line{{-0.02, 0.0}, {0.02, 0.0}, 0.02, 1e-3};
    rasterize_line(f, line);

    SUBCASE("centreline gains a") { CHECK(f.at(5, 5) == 1e-3); }
    SUBCASE("one spacing off the centre gains a cos(pi u / w)")
    {
        CHECK(f.at(4, 5) == doctest::Approx(1e-3 * std::cos(std::numbers::pi * 0.005 / 0.02)).epsilon(1e-12));
    }
    SUBCASE("|u| = w/2 gains nothing") { CHECK(std::abs(f.at(3, 5)) < 1e-18); }
    SUBCASE("the rounded cap uses the distance to the endpoint")
    {
        // Node (5, 0) lies 5 mm beyond the end at x = -20 mm; node (3, 0) is
        // sqrt(5^2 + 10^2) mm from it, outside w/2.
        CHECK(f.at(5, 0) == doctest::Approx(1e-3 * std::cos(std::numbers::pi * 0.005 / 0.02)).epsilon(1e-12));
        CHECK(f.at(3, 0) == 0.0);
    }
    SUBCASE("identical lines stack")
    {
        rasterize_line(f, line);
        CHECK(f.at(5, 5) == doctest::Approx(2e-3).epsilon(1e-15));
    }
}

TEST_CASE("rasterisation is order independent")
{
    Rng rng(5);
    LineFieldRanges ranges;
    std::vector<LineSpec> lines;
    for (int i = 0; i < 2; ++i) lines.push_back(sample_line(rng, ranges));
    const HeightField ab = rasterize_lines(32, kExtent, kBase, lines);
    std::reverse(lines.begin(), lines.end());
    CHECK(rasterize_lines(32, kExtent, kBase, lines) == ab);

    for (int i = 0; i < 8; ++i) lines.push_back(sample_line(rng, ranges));
    const HeightField fwd = rasterize_lines(32, kExtent, kBase, lines);
    std::shuffle(lines.begin(), lines.end(), rng.engine());
    const HeightField shuffled = rasterize_lines(32, kExtent, kBase, lines);
    for (std::size_t i = 0; i < fwd.heights().size(); ++i)
        CHECK(shuffled.heights().values[i] == doctest::Approx(fwd.heights().values[i]).epsilon(1e-14));
}

TEST_CASE("sample_line_field")
{
    LineFieldRanges ranges;

    SUBCASE("fixed seed is bit-identical")
    {
        Rng a(42), b(42);
        const LineField fa = sample_line_field(a, ranges, 64, kExtent, kBase);
        const LineField fb = sample_line_field(b, ranges, 64, kExtent, kBase);
        CHECK(fa.field == fb.field);
        CHECK(fa.lines == fb.lines);
    }
    SUBCASE("collapsed ranges bound the maximum by n_lines * a")
    {
        ranges.n_lines = {4, 4};
        ranges.width = {2e-3, 2e-3};
        ranges.height = {1e-3, 1e-3};
        Rng rng(1);
        const LineField lf = sample_line_field(rng, ranges, 64, kExtent, kBase);
        CHECK(lf.lines.size() == 4);
        CHECK(max_height(lf.field) <= 4e-3 + 1e-15);
        CHECK(max_height(lf.field) > 0.0);
    }
    SUBCASE("heights are non-negative and below the sum of line heights")
    {
        Rng rng(9);
        for (int k = 0; k < 20; ++k) {
            const LineField lf = sample_line_field(rng, ranges, 32, kExtent, kBase);
            double sum = 0.0;
            for (const LineSpec& l : lf.lines) sum += l.height;
            CHECK(max_height(lf.field) <= sum + 1e-15);
            CHECK(*std::min_element(lf.field.heights().values.begin(), lf.field.heights().values.end()) >= 0.0);
            CHECK(static_cast<int>(lf.lines.size()) >= ranges.n_lines.lo);
            CHECK(static_cast<int>(lf.lines.size()) <= ranges.n_lines.hi);
        }
    }
    SUBCASE("10000 widths lie in [0.1 mm, 4 mm]")
    {
        Rng rng(3);
        for (int k = 0; k < 10000; ++k) {
            const LineSpec l = sample_line(rng, ranges);
            REQUIRE(l.width >= 1e-4);
            REQUIRE(l.width <= 4e-3);
        }
    }
}

TEST_CASE("perturb_line_field")
{
    Rng rng(11);
    LineFieldRanges ranges;
    const LineField src = sample_line_field(rng, ranges, 32, kExtent, kBase);

    SUBCASE("zero offsets reproduce the field")
    {
        LineFieldRanges zero = ranges;
        zero.offset_position = {0.0, 0.0};
        zero.offset_width = {0.0, 0.0};
        zero.offset_height = {0.0, 0.0};
        Rng r2(1);
        CHECK(perturb_line_field(src.lines, r2, zero, 32, kExtent, kBase).field == src.field);
    }
    SUBCASE("offsets stay within their bounds and dimensions stay positive")
    {
        Rng r2(2);
        for (int k = 0; k < 50; ++k) {
            const LineField p = perturb_line_field(src.lines, r2, ranges, 32, kExtent, kBase);
            REQUIRE(p.lines.size() == src.lines.size());
            for (std::size_t i = 0; i < p.lines.size(); ++i) {
                CHECK(p.lines[i].width >= kMinLineDimension);
                CHECK(p.lines[i].height >= kMinLineDimension);
                CHECK(std::abs(p.lines[i].start.x - src.lines[i].start.x) <= 2.5e-3 + 1e-15);
                CHECK(std::abs(p.lines[i].end.y - src.lines[i].end.y) <= 2.5e-3 + 1e-15);
                CHECK(std::abs(p.lines[i].start.x) <= 0.025);
            }
        }
    }
    SUBCASE("a large negative width offset is clamped to the floor")
    {
        LineFieldRanges shrink = ranges;
        shrink.offset_width = {-1.0, -1.0};
        shrink.offset_height = {-1.0, -1.0};
        Rng r2(3);
        const LineField p = perturb_line_field(src.lines, r2, shrink, 32, kExtent, kBase);
        for (const LineSpec& l : p.lines) {
            CHECK(l.width == kMinLineDimension);
            CHECK(l.height == kMinLineDimension);
        }
    }
}

TEST_CASE("from_grayscale")
{
    SUBCASE("zero image is flat")
    {
        const HeightField f = from_grayscale(Grid(1, 16, 16, 0.0), 8, kExtent, kBase);
        CHECK(f == HeightField::flat(8, kExtent, kBase));
    }
    SUBCASE("unit image at the default scale is 2 mm everywhere")
    {
        const HeightField f = from_grayscale(Grid(1, 16, 16, 1.0), 8, kExtent, kBase);
        for (double v : f.heights().values) CHECK(v == doctest::Approx(2e-3).epsilon(1e-15));
    }
    SUBCASE("checkerboard at matching resolution alternates 0 and 2 mm")
    {
        Grid img(1, 6, 6);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c) img.at(0, r, c) = (r + c) % 2;
        const HeightField f = from_grayscale(img, 6, kExtent, kBase);
        for (int r = 0; r < 6; ++r)
            for (int c = 0; c < 6; ++c) CHECK(f.at(r, c) == doctest::Approx(2e-3 * ((r + c) % 2)).epsilon(1e-12));
    }
    SUBCASE("values outside [0, 1] are rejected")
    {
        Grid img(1, 4, 4, 0.5);
        img.at(0, 1, 1) = 1.5;
        CHECK_THROWS_AS((void)from_grayscale(img, 4, kExtent, kBase), Error);
        img.at(0, 1, 1) = -0.1;
        CHECK_THROWS_AS((void)from_grayscale(img, 4, kExtent, kBase), Error);
    }
}

TEST_CASE("validate rejects negative and non-finite heights")
{
    HeightField f = HeightField::flat(4, kExtent, kBase);
    CHECK_NOTHROW(f.validate());
    f.at(1, 2) = -1e-9;
    CHECK_THROWS_AS(f.validate(), Error);
    f.at(1, 2) = std::nan("");
    CHECK_THROWS_AS(f.validate(), Error);
}
