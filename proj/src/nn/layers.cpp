#include "nsfc/nn/layers.hpp"

#include "nsfc/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace nsfc::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;

constexpr double kSeluScale = 1.0507009873554805;
constexpr double kSeluAlpha = 1.6732632423543772;

void check_conv(const Tensor& x, std::span<const double> w, const ConvGeom& g)
{
    require(x.c == g.in_channels, "conv2d: input channel count mismatch");
    require(w.size() == g.weight_count(), "conv2d: weight size mismatch");
    require(g.kernel >= 1 && g.stride >= 1, "conv2d: invalid kernel or stride");
    require(g.out_size(x.h) >= 1 && g.out_size(x.w) >= 1, "conv2d: input smaller than the kernel");
}

// Row (ci, ky, kx) holds the input sample seen by that tap at every output
// position.
void im2col(const double* img, int c, int h, int w, const ConvGeom& g, int oh, int ow, RowMatrix& cols)
{
    const int k = g.kernel;
    cols.resize(static_cast<Eigen::Index>(c) * k * k, static_cast<Eigen::Index>(oh) * ow);
    for (int ci = 0; ci < c; ++ci) {
        const double* plane = img + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols.row((ci * k + ky) * k + kx).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad.lo;
                    double* out = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(out, out + ow, 0.0);
                        continue;
                    }
                    const double* in_row = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad.lo;
                        out[ox] = (ix >= 0 && ix < w) ? in_row[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const RowMatrix& cols, int c, int h, int w, const ConvGeom& g, int oh, int ow, double* img)
{
    const int k = g.kernel;
    for (int ci = 0; ci < c; ++ci) {
        double* plane = img + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row = cols.row((ci * k + ky) * k + kx).data();
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride + ky - g.pad.lo;
                    if (iy < 0 || iy >= h) continue;
                    double* in_row = plane + static_cast<std::size_t>(iy) * w;
                    const double* src = row + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride + kx - g.pad.lo;
                        if (ix >= 0 && ix < w) in_row[ix] += src[ox];
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& x, std::span<const double> w, std::span<const double> b, const ConvGeom& g)
{
    check_conv(x, w, g);
    require(b.size() == static_cast<std::size_t>(g.out_channels), "conv2d: bias size mismatch");
    const int oh = g.out_size(x.h);
    const int ow = g.out_size(x.w);
    Tensor y(x.n, g.out_channels, oh, ow);
    // Eigen-owned copies keep the alignment, and with it the summation
    // order, independent of where the caller's buffers happen to live.
    const RowMatrix weights = ConstMap(w.data(), g.out_channels, static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel);
    const Eigen::VectorXd bias = Eigen::Map<const Eigen::VectorXd>(b.data(), g.out_channels);

    RowMatrix cols;
    RowMatrix out;
    for (int i = 0; i < x.n; ++i) {
        im2col(x.image(i), x.c, x.h, x.w, g, oh, ow, cols);
        out.noalias() = weights * cols;
        out.colwise() += bias;
        std::copy(out.data(), out.data() + out.size(), y.image(i));
    }
    return y;
}

ConvGrads conv2d_backward(const Tensor& x, std::span<const double> w, const ConvGeom& g, const Tensor& dy,
                          bool need_dx)
{
    check_conv(x, w, g);
    const int oh = g.out_size(x.h);
    const int ow = g.out_size(x.w);
    require(dy.n == x.n && dy.c == g.out_channels && dy.h == oh && dy.w == ow, "conv2d_backward: dy shape mismatch");
    const Eigen::Index positions = static_cast<Eigen::Index>(oh) * ow;
    const Eigen::Index taps = static_cast<Eigen::Index>(g.in_channels) * g.kernel * g.kernel;

    ConvGrads grads;
    grads.dw.assign(g.weight_count(), 0.0);
    grads.db.assign(static_cast<std::size_t>(g.out_channels), 0.0);
    if (need_dx) grads.dx = Tensor(x.n, x.c, x.h, x.w);

    const RowMatrix weights = ConstMap(w.data(), g.out_channels, taps);
    RowMatrix dw = RowMatrix::Zero(g.out_channels, taps);

    RowMatrix cols;
    RowMatrix dcols;
    RowMatrix dout;
    for (int i = 0; i < x.n; ++i) {
        dout = ConstMap(dy.image(i), g.out_channels, positions);
        im2col(x.image(i), x.c, x.h, x.w, g, oh, ow, cols);
        dw.noalias() += dout * cols.transpose();
        for (int co = 0; co < g.out_channels; ++co) {
            const double* row = dout.row(co).data();
            double sum = 0.0;
            for (Eigen::Index p = 0; p < positions; ++p) sum += row[p];
            grads.db[co] += sum;
        }
        if (need_dx) {
            dcols.noalias() = weights.transpose() * dout;
            col2im(dcols, x.c, x.h, x.w, g, oh, ow, grads.dx.image(i));
        }
    }
    std::copy(dw.data(), dw.data() + dw.size(), grads.dw.begin());
    return grads;
}

Nonlin parse_nonlin(const std::string& name)
{
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "elu") return Nonlin::elu;
    if (lower == "relu") return Nonlin::relu;
    if (lower == "prelu") return Nonlin::prelu;
    if (lower == "selu") return Nonlin::selu;
    throw Error(ErrorKind::invalid_argument, "unknown nonlinearity: " + name);
}

std::string to_string(Nonlin kind)
{
    switch (kind) {
    case Nonlin::elu: return "ELU";
    case Nonlin::relu: return "ReLU";
    case Nonlin::prelu: return "PReLU";
    case Nonlin::selu: return "SELU";
    }
    return "?";
}

Tensor nonlin_forward(Nonlin kind, const Tensor& x, double slope)
{
    Tensor y = x;
    for (double& v : y.data) {
        switch (kind) {
        case Nonlin::elu: v = v > 0.0 ? v : std::expm1(v); break;
        case Nonlin::relu: v = v > 0.0 ? v : 0.0; break;
        case Nonlin::prelu: v = v > 0.0 ? v : slope * v; break;
        case Nonlin::selu: v = kSeluScale * (v > 0.0 ? v : kSeluAlpha * std::expm1(v)); break;
        }
    }
    return y;
}

NonlinGrads nonlin_backward(Nonlin kind, const Tensor& x, const Tensor& dy, double slope)
{
    require(x.same_shape(dy), "nonlin_backward: shape mismatch");
    NonlinGrads g;
    g.dx = dy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        double& d = g.dx.data[i];
        switch (kind) {
        case Nonlin::elu: d *= v > 0.0 ? 1.0 : std::exp(v); break;
        case Nonlin::relu: d *= v > 0.0 ? 1.0 : 0.0; break;
        case Nonlin::prelu:
            if (v <= 0.0) {
                g.dslope += v * d;
                d *= slope;
            }
            break;
        case Nonlin::selu: d *= kSeluScale * (v > 0.0 ? 1.0 : kSeluAlpha * std::exp(v)); break;
        }
    }
    return g;
}

Tensor upsample2x(const Tensor& x)
{
    Tensor y(x.n, x.c, 2 * x.h, 2 * x.w);
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.c; ++c)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx) y.at(i, c, yy, xx) = x.at(i, c, yy / 2, xx / 2);
    return y;
}

Tensor upsample2x_backward(const Tensor& dy)
{
    require(dy.h % 2 == 0 && dy.w % 2 == 0, "upsample2x_backward: odd size");
    Tensor dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
    for (int i = 0; i < dy.n; ++i)
        for (int c = 0; c < dy.c; ++c)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx) dx.at(i, c, yy / 2, xx / 2) += dy.at(i, c, yy, xx);
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b)
{
    require(a.n == b.n && a.h == b.h && a.w == b.w, "concat_channels: shape mismatch");
    Tensor y(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
        std::copy(a.image(i), a.image(i) + a.image_size(), y.image(i));
        std::copy(b.image(i), b.image(i) + b.image_size(), y.image(i) + a.image_size());
    }
    return y;
}

void split_channels(const Tensor& dy, int a_channels, Tensor& da, Tensor& db)
{
    require(a_channels > 0 && a_channels < dy.c, "split_channels: bad split");
    da = Tensor(dy.n, a_channels, dy.h, dy.w);
    db = Tensor(dy.n, dy.c - a_channels, dy.h, dy.w);
    for (int i = 0; i < dy.n; ++i) {
        const double* src = dy.image(i);
        std::copy(src, src + da.image_size(), da.image(i));
        std::copy(src + da.image_size(), src + dy.image_size(), db.image(i));
    }
}

Tensor avg_pool(const Tensor& x, int factor)
{
    require(factor >= 1 && x.h % factor == 0 && x.w % factor == 0, "avg_pool: size not divisible by factor");
    if (factor == 1) return x;
    Tensor y(x.n, x.c, x.h / factor, x.w / factor);
    const double scale = 1.0 / (factor * factor);
    for (int i = 0; i < x.n; ++i)
        for (int c = 0; c < x.c; ++c)
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) y.at(i, c, yy / factor, xx / factor) += scale * x.at(i, c, yy, xx);
    return y;
}

} // namespace nsfc::nn
