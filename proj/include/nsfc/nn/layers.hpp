#pragma once

#include "nsfc/nn/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace nsfc::nn {

struct Padding
{
    int lo = 0;
    int hi = 0;

    // Keeps the spatial size at stride 1; the extra pixel of an even kernel
    // goes to the high side.
    [[nodiscard]] static Padding same(int kernel) { return {(kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2}; }
    // Halves an even spatial size at stride 2.
    [[nodiscard]] static Padding halving(int kernel) { return {(kernel - 2) / 2, kernel - 2 - (kernel - 2) / 2}; }
};

struct ConvGeom
{
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 3;
    int stride = 1;
    Padding pad;

    [[nodiscard]] int out_size(int in) const noexcept { return (in + pad.lo + pad.hi - kernel) / stride + 1; }
    [[nodiscard]] std::size_t weight_count() const noexcept
    {
        return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
    }
};

// Cross-correlation with zero padding. w is (out, in, k, k), b is (out).
[[nodiscard]] Tensor conv2d(const Tensor& x, std::span<const double> w, std::span<const double> b, const ConvGeom& g);

struct ConvGrads
{
    Tensor dx;
    std::vector<double> dw;
    std::vector<double> db;
};

[[nodiscard]] ConvGrads conv2d_backward(const Tensor& x, std::span<const double> w, const ConvGeom& g,
                                        const Tensor& dy, bool need_dx = true);

enum class Nonlin { elu, relu, prelu, selu };

[[nodiscard]] Nonlin parse_nonlin(const std::string& name);
[[nodiscard]] std::string to_string(Nonlin kind);

inline constexpr double kPreluInitialSlope = 0.25;

// `slope` is the PReLU parameter and ignored for the other kinds.
[[nodiscard]] Tensor nonlin_forward(Nonlin kind, const Tensor& x, double slope = kPreluInitialSlope);

struct NonlinGrads
{
    Tensor dx;
    double dslope = 0.0;
};

[[nodiscard]] NonlinGrads nonlin_backward(Nonlin kind, const Tensor& x, const Tensor& dy,
                                          double slope = kPreluInitialSlope);

[[nodiscard]] Tensor upsample2x(const Tensor& x);
[[nodiscard]] Tensor upsample2x_backward(const Tensor& dy);

[[nodiscard]] Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits dy back into the parts belonging to a (first a_channels) and b.
void split_channels(const Tensor& dy, int a_channels, Tensor& da, Tensor& db);

[[nodiscard]] Tensor avg_pool(const Tensor& x, int factor);

} // namespace nsfc::nn
