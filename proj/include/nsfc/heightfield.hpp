#pragma once

#include "nsfc/grid.hpp"
#include "nsfc/rng.hpp"

#include <vector>

namespace nsfc {

struct Extent
{
    double x = 0.05;
    double y = 0.05;
    friend bool operator==(const Extent&, const Extent&) = default;
};

struct Point2
{
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

// Elevation above the top of a flat substrate of thickness base_thickness.
// The n x n heights sit on grid nodes spanning the full extent, centred at
// the origin: node (i, j) is at x = -extent.x/2 + j*extent.x/(n-1) and
// y = -extent.y/2 + i*extent.y/(n-1). Heights are in meters.
class HeightField
{
public:
    HeightField() = default;
    HeightField(Grid heights, Extent extent, double base_thickness);

    [[nodiscard]] static HeightField flat(int n, Extent extent, double base_thickness);

    [[nodiscard]] int size() const noexcept { return heights_.rows; }
    [[nodiscard]] const Extent& extent() const noexcept { return extent_; }
    [[nodiscard]] double base_thickness() const noexcept { return base_thickness_; }

    [[nodiscard]] const Grid& heights() const noexcept { return heights_; }
    Grid& heights() noexcept { return heights_; }

    double& at(int row, int col) noexcept { return heights_.at(0, row, col); }
    [[nodiscard]] double at(int row, int col) const noexcept { return heights_.at(0, row, col); }

    [[nodiscard]] double spacing_x() const noexcept { return extent_.x / (size() - 1); }
    [[nodiscard]] double spacing_y() const noexcept { return extent_.y / (size() - 1); }
    [[nodiscard]] double node_x(int col) const noexcept { return -0.5 * extent_.x + col * spacing_x(); }
    [[nodiscard]] double node_y(int row) const noexcept { return -0.5 * extent_.y + row * spacing_y(); }

    [[nodiscard]] bool contains(Point2 p) const noexcept;

    // Throws if any height is negative or non-finite.
    void validate() const;

    friend bool operator==(const HeightField&, const HeightField&) = default;

private:
    Grid heights_;
    Extent extent_;
    double base_thickness_ = 0.003;
};

struct LineSpec
{
    Point2 start;
    Point2 end;
    double width = 0.0;  // full width w, profile reaches zero at |u| = w/2
    double height = 0.0; // peak elevation a on the centre segment
    friend bool operator==(const LineSpec&, const LineSpec&) = default;
};

struct Range
{
    double lo = 0.0;
    double hi = 0.0;
};

struct IntRange
{
    int lo = 0;
    int hi = 0;
};

// Sampling ranges for line-filament height fields; defaults are the
// printed-filament distribution (lengths in meters).
struct LineFieldRanges
{
    IntRange n_lines{2, 30};
    Range start_x{-0.025, 0.025};
    Range start_y{-0.025, 0.025};
    Range end_x{-0.025, 0.025};
    Range end_y{-0.025, 0.025};
    Range width{1e-4, 4e-3};
    Range height{1e-4, 2e-3};

    // Perturbation offsets used to derive updater targets.
    Range offset_position{-2.5e-3, 2.5e-3};
    Range offset_width{-1e-3, 1e-3};
    Range offset_height{-1e-3, 1e-3};

    void validate() const;
};

// Perturbed widths and heights never drop below this floor.
inline constexpr double kMinLineDimension = 1e-5;

// Adds a*cos(pi*u/w) to every node whose distance u to the centre segment is
// at most w/2 (rounded caps at the endpoints).
void rasterize_line(HeightField& field, const LineSpec& line);

[[nodiscard]] HeightField rasterize_lines(int n, Extent extent, double base_thickness,
                                          const std::vector<LineSpec>& lines);

struct LineField
{
    HeightField field;
    std::vector<LineSpec> lines;
};

[[nodiscard]] LineSpec sample_line(Rng& rng, const LineFieldRanges& ranges);

[[nodiscard]] LineField sample_line_field(Rng& rng, const LineFieldRanges& ranges, int n, Extent extent,
                                          double base_thickness);

// Same as sample_line_field with the line count fixed.
[[nodiscard]] LineField sample_line_field(Rng& rng, const LineFieldRanges& ranges, int n_lines, int n,
                                          Extent extent, double base_thickness);

// Offsets every line's endpoints, width and height by uniform draws from the
// offset ranges. Endpoints are clipped to the extent, widths and heights to
// kMinLineDimension.
[[nodiscard]] LineField perturb_line_field(const std::vector<LineSpec>& lines, Rng& rng,
                                           const LineFieldRanges& ranges, int n, Extent extent,
                                           double base_thickness);

inline constexpr double kDefaultGrayscaleHeight = 2e-3;

// Scales a [0, 1] image by height_scale and resamples it bilinearly onto the
// n x n node grid (image corners map to field corners).
[[nodiscard]] HeightField from_grayscale(const Grid& image, int n, Extent extent, double base_thickness,
                                         double height_scale = kDefaultGrayscaleHeight);

} // namespace nsfc
