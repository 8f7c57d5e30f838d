#include "nsfc/heightfield.hpp"

#include "nsfc/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nsfc {

HeightField::HeightField(Grid heights, Extent extent, double base_thickness)
    : heights_(std::move(heights))
    , extent_(extent)
    , base_thickness_(base_thickness)
{
    require(heights_.channels == 1, "height field must have one channel");
    require(heights_.rows >= 2 && heights_.rows == heights_.cols, "height field must be n x n with n >= 2");
    require(extent_.x > 0.0 && extent_.y > 0.0, "height field extent must be positive");
    require(base_thickness_ > 0.0, "base thickness must be positive");
}

HeightField HeightField::flat(int n, Extent extent, double base_thickness)
{
    require(n >= 2, "height field size must be >= 2");
    return HeightField(Grid(1, n, n, 0.0), extent, base_thickness);
}

bool HeightField::contains(Point2 p) const noexcept
{
    return std::abs(p.x) <= 0.5 * extent_.x && std::abs(p.y) <= 0.5 * extent_.y;
}

void HeightField::validate() const
{
    for (double h : heights_.values)
        if (!std::isfinite(h) || h < 0.0) throw Error(ErrorKind::numeric, "height field has negative or non-finite entries");
}

void LineFieldRanges::validate() const
{
    auto ok = [](Range r) { return r.lo <= r.hi; };
    require(n_lines.lo >= 1 && n_lines.lo <= n_lines.hi, "line count range is empty");
    require(ok(start_x) && ok(start_y) && ok(end_x) && ok(end_y), "line endpoint range is empty");
    require(ok(width) && width.lo > 0.0, "line width range must be positive and non-empty");
    require(ok(height) && height.lo > 0.0, "line height range must be positive and non-empty");
    require(ok(offset_position) && ok(offset_width) && ok(offset_height), "offset range is empty");
}

void rasterize_line(HeightField& field, const LineSpec& line)
{
    const double half = 0.5 * line.width;
    if (!(half > 0.0) || !(line.height > 0.0)) return;

    const double dx = line.end.x - line.start.x;
    const double dy = line.end.y - line.start.y;
    const double len2 = dx * dx + dy * dy;

    const int n = field.size();
    const double sx = field.spacing_x();
    const double sy = field.spacing_y();
    const double x0 = -0.5 * field.extent().x;
    const double y0 = -0.5 * field.extent().y;

    auto col_of = [&](double x) { return (x - x0) / sx; };
    auto row_of = [&](double y) { return (y - y0) / sy; };
    const int c_lo = std::max(0, static_cast<int>(std::floor(col_of(std::min(line.start.x, line.end.x) - half))));
    const int c_hi = std::min(n - 1, static_cast<int>(std::ceil(col_of(std::max(line.start.x, line.end.x) + half))));
    const int r_lo = std::max(0, static_cast<int>(std::floor(row_of(std::min(line.start.y, line.end.y) - half))));
    const int r_hi = std::min(n - 1, static_cast<int>(std::ceil(row_of(std::max(line.start.y, line.end.y) + half))));

    for (int r = r_lo; r <= r_hi; ++r) {
        const double py = field.node_y(r);
        for (int c = c_lo; c <= c_hi; ++c) {
            const double px = field.node_x(c);
            double t = len2 > 0.0 ? ((px - line.start.x) * dx + (py - line.start.y) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double u = std::hypot(px - (line.start.x + t * dx), py - (line.start.y + t * dy));
            if (u <= half) field.at(r, c) += line.height * std::cos(std::numbers::pi * u / line.width);
        }
    }
}

HeightField rasterize_lines(int n, Extent extent, double base_thickness, const std::vector<LineSpec>& lines)
{
    HeightField field = HeightField::flat(n, extent, base_thickness);
    for (const LineSpec& line : lines) rasterize_line(field, line);
    // cos() is exactly 0 only in the limit; clamp round-off at the rim.
    for (double& h : field.heights().values) h = std::max(h, 0.0);
    return field;
}

LineSpec sample_line(Rng& rng, const LineFieldRanges& ranges)
{
    LineSpec line;
    do {
        line.start = {rng.uniform(ranges.start_x.lo, ranges.start_x.hi), rng.uniform(ranges.start_y.lo, ranges.start_y.hi)};
        line.end = {rng.uniform(ranges.end_x.lo, ranges.end_x.hi), rng.uniform(ranges.end_y.lo, ranges.end_y.hi)};
    } while (line.start == line.end && (ranges.start_x.lo < ranges.start_x.hi || ranges.end_x.lo < ranges.end_x.hi ||
                                        ranges.start_y.lo < ranges.start_y.hi || ranges.end_y.lo < ranges.end_y.hi));
    line.width = rng.uniform(ranges.width.lo, ranges.width.hi);
    line.height = rng.uniform(ranges.height.lo, ranges.height.hi);
    return line;
}

LineField sample_line_field(Rng& rng, const LineFieldRanges& ranges, int n_lines, int n, Extent extent,
                            double base_thickness)
{
    ranges.validate();
    require(n_lines >= 1, "line count must be >= 1");
    LineField out;
    out.lines.reserve(static_cast<std::size_t>(n_lines));
    for (int i = 0; i < n_lines; ++i) out.lines.push_back(sample_line(rng, ranges));
    out.field = rasterize_lines(n, extent, base_thickness, out.lines);
    return out;
}

LineField sample_line_field(Rng& rng, const LineFieldRanges& ranges, int n, Extent extent, double base_thickness)
{
    ranges.validate();
    const int n_lines = rng.uniform_int(ranges.n_lines.lo, ranges.n_lines.hi);
    return sample_line_field(rng, ranges, n_lines, n, extent, base_thickness);
}

LineField perturb_line_field(const std::vector<LineSpec>& lines, Rng& rng, const LineFieldRanges& ranges, int n,
                             Extent extent, double base_thickness)
{
    require(!lines.empty(), "cannot perturb an empty line list");
    ranges.validate();
    const double hx = 0.5 * extent.x;
    const double hy = 0.5 * extent.y;
    auto offset = [&](Range r) { return r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi); };

    LineField out;
    out.lines.reserve(lines.size());
    for (const LineSpec& src : lines) {
        LineSpec line = src;
        line.start.x = std::clamp(line.start.x + offset(ranges.offset_position), -hx, hx);
        line.start.y = std::clamp(line.start.y + offset(ranges.offset_position), -hy, hy);
        line.end.x = std::clamp(line.end.x + offset(ranges.offset_position), -hx, hx);
        line.end.y = std::clamp(line.end.y + offset(ranges.offset_position), -hy, hy);
        line.width = std::max(kMinLineDimension, line.width + offset(ranges.offset_width));
        line.height = std::max(kMinLineDimension, line.height + offset(ranges.offset_height));
        out.lines.push_back(line);
    }
    out.field = rasterize_lines(n, extent, base_thickness, out.lines);
    return out;
}

HeightField from_grayscale(const Grid& image, int n, Extent extent, double base_thickness, double height_scale)
{
    require(image.channels == 1 && image.rows >= 1 && image.cols >= 1, "grayscale image must be a non-empty single-channel grid");
    require(height_scale >= 0.0, "height scale must be non-negative");
    for (double v : image.values)
        require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "grayscale values must lie in [0, 1]");

    HeightField field = HeightField::flat(n, extent, base_thickness);
    const double ry = image.rows > 1 ? static_cast<double>(image.rows - 1) / (n - 1) : 0.0;
    const double rx = image.cols > 1 ? static_cast<double>(image.cols - 1) / (n - 1) : 0.0;
    for (int r = 0; r < n; ++r) {
        const double fy = r * ry;
        const int y0 = std::min(static_cast<int>(fy), image.rows - 1);
        const int y1 = std::min(y0 + 1, image.rows - 1);
        const double ty = fy - y0;
        for (int c = 0; c < n; ++c) {
            const double fx = c * rx;
            const int x0 = std::min(static_cast<int>(fx), image.cols - 1);
            const int x1 = std::min(x0 + 1, image.cols - 1);
            const double tx = fx - x0;
            const double v = (1 - ty) * ((1 - tx) * image.at(0, y0, x0) + tx * image.at(0, y0, x1)) +
                             ty * ((1 - tx) * image.at(0, y1, x0) + tx * image.at(0, y1, x1));
            // Rounding may push the blend a few ulps past the unit range.
            field.at(r, c) = std::clamp(v, 0.0, 1.0) * height_scale;
        }
    }
    return field;
}

} // namespace nsfc
