#pragma once

#include <cstddef>
#include <vector>

namespace nsfc::nn {

// Dense NCHW tensor of doubles.
struct Tensor
{
    int n = 1;
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, double fill = 0.0)
        : n(n_)
        , c(c_)
        , h(h_)
        , w(w_)
        , data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill)
    {}

    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    [[nodiscard]] std::size_t image_size() const noexcept { return static_cast<std::size_t>(c) * h * w; }
    [[nodiscard]] std::size_t index(int in, int ic, int y, int x) const noexcept
    {
        return ((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x;
    }
    double& at(int in, int ic, int y, int x) noexcept { return data[index(in, ic, y, x)]; }
    [[nodiscard]] double at(int in, int ic, int y, int x) const noexcept { return data[index(in, ic, y, x)]; }

    [[nodiscard]] double* image(int in) noexcept { return data.data() + in * image_size(); }
    [[nodiscard]] const double* image(int in) const noexcept { return data.data() + in * image_size(); }

    [[nodiscard]] bool same_shape(const Tensor& o) const noexcept
    {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

} // namespace nsfc::nn
