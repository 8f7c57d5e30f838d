#pragma once

#include <cstddef>
#include <vector>

namespace nsfc {

// Channel-planar dense grid: index = (channel * rows + row) * cols + col.
struct Grid
{
    int channels = 0;
    int rows = 0;
    int cols = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int channels_, int rows_, int cols_, double fill = 0.0)
        : channels(channels_)
        , rows(rows_)
        , cols(cols_)
        , values(static_cast<std::size_t>(channels_) * rows_ * cols_, fill)
    {}

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] std::size_t plane_size() const noexcept
    {
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }

    [[nodiscard]] std::size_t index(int c, int r, int col) const noexcept
    {
        return (static_cast<std::size_t>(c) * rows + r) * cols + col;
    }
    double& at(int c, int r, int col) noexcept { return values[index(c, r, col)]; }
    [[nodiscard]] double at(int c, int r, int col) const noexcept { return values[index(c, r, col)]; }

    [[nodiscard]] bool same_shape(const Grid& o) const noexcept
    {
        return channels == o.channels && rows == o.rows && cols == o.cols;
    }

    friend bool operator==(const Grid&, const Grid&) = default;
};

} // namespace nsfc
