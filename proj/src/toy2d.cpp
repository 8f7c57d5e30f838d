#include "nsfc/toy2d.hpp"

#include "nsfc/error.hpp"
#include "nsfc/metrics.hpp"
#include "nsfc/nn/adam.hpp"

#include <ceres/jet.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace nsfc::toy2d {

namespace {

using Jet4 = ceres::Jet<double, 4>;

// Nodes j-1 .. j+2 around cell j, clipped to the profile.
struct Window
{
    int cell = 0;
    double t = 0.0;
    std::array<int, 4> idx{};
};

Window window_at(const Profile1D& p, double x)
{
    const int n = p.size();
    Window w;
    const double u = (x + 0.5 * p.extent) / p.spacing();
    w.cell = std::clamp(static_cast<int>(std::floor(u)), 0, n - 2);
    w.t = u - w.cell;
    w.idx = {std::max(w.cell - 1, 0), w.cell, w.cell + 1, std::min(w.cell + 2, n - 1)};
    return w;
}

template <class T>
struct Trace
{
    bool ok = false;
    T surface_z{};
    T bottom_x{};
    T screen_x{};
};

template <class T>
Trace<T> trace_one(const std::array<T, 4>& h, const Window& w, double x, const Profile1D& p, double screen_depth)
{
    using std::sqrt;
    const double dx = p.spacing();
    const T height = (1.0 - w.t) * h[1] + w.t * h[2];
    const T s0 = (h[2] - h[0]) / (dx * (w.idx[2] - w.idx[0]));
    const T s1 = (h[3] - h[1]) / (dx * (w.idx[3] - w.idx[1]));
    const T slope = (1.0 - w.t) * s0 + w.t * s1;

    Trace<T> out;
    // Top surface, ray (0, -1), upward normal (-s, 1)/|.|.
    const T inv_len = 1.0 / sqrt(1.0 + slope * slope);
    const T nx = -slope * inv_len;
    const T nz = inv_len;
    const double eta = 1.0 / p.ior;
    const T cos_i = nz;
    const T k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
    if (k < T(0.0)) return out;
    const T a = eta * cos_i - sqrt(k);
    const T tx = a * nx;
    const T tz = -eta + a * nz;
    out.surface_z = p.base_thickness + height;
    out.bottom_x = x + tx * (out.surface_z / -tz);

    // Flat bottom, normal (0, 1).
    const T cos_b = -tz;
    const T k2 = 1.0 - p.ior * p.ior * (1.0 - cos_b * cos_b);
    if (k2 < T(0.0)) return out;
    const T b = p.ior * cos_b - sqrt(k2);
    const T ox = p.ior * tx;
    const T oz = p.ior * tz + b;
    out.screen_x = out.bottom_x + ox * (screen_depth / -oz);
    out.ok = true;
    return out;
}

double ray_x(const Profile1D& p, int k, int n_rays)
{
    return -0.5 * p.extent + (k + 0.5) * p.extent / n_rays;
}

double l_rel_1d(const std::vector<double>& est, const std::vector<double>& truth)
{
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        num += (est[i] - truth[i]) * (est[i] - truth[i]);
        den += truth[i] * truth[i];
    }
    require(den > 0.0, "relative error against an all-zero profile");
    return std::sqrt(num / den);
}

} // namespace

Profile1D Profile1D::flat(int n, double extent, double base_thickness, double ior)
{
    Profile1D p;
    p.heights.assign(static_cast<std::size_t>(n), 0.0);
    p.extent = extent;
    p.base_thickness = base_thickness;
    p.ior = ior;
    p.validate();
    return p;
}

void Profile1D::validate() const
{
    require(heights.size() >= 2, "profile needs at least two nodes");
    require(extent > 0.0 && base_thickness > 0.0 && ior >= 1.0, "profile geometry is invalid");
    for (double h : heights)
        require(std::isfinite(h) && h >= 0.0, "profile heights must be finite and non-negative");
}

double Profile1D::height_at(double x) const
{
    const Window w = window_at(*this, x);
    return (1.0 - w.t) * heights[w.idx[1]] + w.t * heights[w.idx[2]];
}

double Profile1D::slope_at(double x) const
{
    const Window w = window_at(*this, x);
    const double s0 = (heights[w.idx[2]] - heights[w.idx[0]]) / (spacing() * (w.idx[2] - w.idx[0]));
    const double s1 = (heights[w.idx[3]] - heights[w.idx[1]]) / (spacing() * (w.idx[3] - w.idx[1]));
    return (1.0 - w.t) * s0 + w.t * s1;
}

std::vector<Ray2d> trace_rays(const Profile1D& p, int n_rays, double screen_depth)
{
    p.validate();
    require(n_rays >= 1, "need at least one ray");
    require(screen_depth >= 0.0, "screen depth must be non-negative");
    std::vector<Ray2d> rays;
    for (int k = 0; k < n_rays; ++k) {
        const double x = ray_x(p, k, n_rays);
        const Window w = window_at(p, x);
        const std::array<double, 4> h{p.heights[w.idx[0]], p.heights[w.idx[1]], p.heights[w.idx[2]],
                                      p.heights[w.idx[3]]};
        const Trace<double> t = trace_one(h, w, x, p, screen_depth);
        if (t.ok) rays.push_back({x, t.surface_z, t.bottom_x, t.screen_x});
    }
    return rays;
}

std::vector<double> trace2d(const Profile1D& p, int n_rays, double screen_depth)
{
    std::vector<double> out;
    for (const Ray2d& r : trace_rays(p, n_rays, screen_depth)) out.push_back(r.screen_x);
    return out;
}

std::vector<double> trace2d_vjp(const Profile1D& p, int n_rays, double screen_depth, const std::vector<double>& w)
{
    p.validate();
    std::vector<double> grad(p.heights.size(), 0.0);
    std::size_t alive = 0;
    for (int k = 0; k < n_rays; ++k) {
        const double x = ray_x(p, k, n_rays);
        const Window win = window_at(p, x);
        std::array<Jet4, 4> h;
        for (int i = 0; i < 4; ++i) h[i] = Jet4(p.heights[win.idx[i]], i);
        const Trace<Jet4> t = trace_one(h, win, x, p, screen_depth);
        if (!t.ok) continue;
        require(alive < w.size(), "trace2d_vjp: weight count does not match the surviving rays");
        for (int i = 0; i < 4; ++i) grad[win.idx[i]] += w[alive] * t.screen_x.v[i];
        ++alive;
    }
    require(alive == w.size(), "trace2d_vjp: weight count does not match the surviving rays");
    return grad;
}

HausdorffRun optimize_hausdorff(const std::vector<double>& target_pts, const Profile1D& init, int steps,
                                const HausdorffOptions& options)
{
    require(steps >= 1, "need at least one optimisation step");
    require(!target_pts.empty(), "target point set is empty");
    require(options.lr > 0.0 && options.lr_end > 0.0 && options.tau > 0.0 && options.tau_start > 0.0 && options.tau_end > 0.0, "invalid optimiser settings");
    init.validate();

    HausdorffRun run;
    run.profile = init;
    nn::ParamList params{init.heights};
    nn::AdamState adam;
    const auto decay = [&](double from, double to) { return steps > 1 ? std::pow(to / from, 1.0 / (steps - 1)) : 1.0; };
    const double tau_decay = decay(options.tau_start, options.tau_end);
    const double lr_decay = decay(options.lr, options.lr_end);
    double tau = options.tau_start;
    double lr = options.lr;
    for (int s = 0; s < steps; ++s) {
        run.profile.heights = params[0];
        const std::vector<double> pts = trace2d(run.profile, options.n_rays, options.screen_depth);
        require(!pts.empty(), "every ray was totally internally reflected");
        run.loss.push_back(hausdorff(pts, target_pts));
        const SoftHausdorff soft = soft_hausdorff(pts, target_pts, 1, std::max(options.tau, tau), tau);
        run.surrogate.push_back(soft.value);
        const nn::ParamList grads{trace2d_vjp(run.profile, options.n_rays, options.screen_depth, soft.grad_a)};
        nn::adam_step(params, grads, adam, lr);
        for (double& h : params[0]) h = std::max(0.0, h);
        tau *= tau_decay;
        lr *= lr_decay;
    }
    run.profile.heights = params[0];
    run.loss.push_back(hausdorff(trace2d(run.profile, options.n_rays, options.screen_depth), target_pts));
    return run;
}

Profile1D demo_truth(int n)
{
    Profile1D p = Profile1D::flat(n);
    for (int j = 0; j < n; ++j) {
        const double u = p.node_x(j) / 0.003;
        p.heights[j] = 2.0e-3 * std::exp(-u * u);
    }
    return p;
}

DemoResult run_demo(int steps, const HausdorffOptions& options, int n)
{
    DemoResult d;
    d.truth = demo_truth(n);
    d.init = Profile1D::flat(n, d.truth.extent, d.truth.base_thickness, d.truth.ior);
    const std::vector<double> target = trace2d(d.truth, options.n_rays, options.screen_depth);
    d.run = optimize_hausdorff(target, d.init, steps, options);
    d.initial_hausdorff = d.run.loss.front();
    d.final_hausdorff = d.run.loss.back();
    d.initial_l_rel = l_rel_1d(d.init.heights, d.truth.heights);
    d.final_l_rel = l_rel_1d(d.run.profile.heights, d.truth.heights);
    return d;
}

// ---- drawing ------------------------------------------------------------------

namespace {

struct Canvas
{
    Grid rgb;
    double x0, x1, z0, z1; // world window
    int col_offset;
    int width;

    [[nodiscard]] double px(double x) const { return col_offset + (x - x0) / (x1 - x0) * (width - 1); }
    [[nodiscard]] double pz(double z) const { return (z - z0) / (z1 - z0) * (rgb.rows - 1); }

    void blend(int r, int c, const std::array<double, 3>& color, double alpha)
    {
        if (r < 0 || r >= rgb.rows || c < col_offset || c >= col_offset + width) return;
        for (int ch = 0; ch < 3; ++ch) {
            double& v = rgb.at(ch, r, c);
            v = (1.0 - alpha) * v + alpha * color[ch];
        }
    }

    void line(double xa, double za, double xb, double zb, const std::array<double, 3>& color, double alpha)
    {
        const double ca = px(xa), ra = pz(za), cb = px(xb), rb = pz(zb);
        const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(cb - ca), std::abs(rb - ra)))));
        for (int i = 0; i <= steps; ++i) {
            const double t = static_cast<double>(i) / steps;
            blend(static_cast<int>(std::lround(ra + t * (rb - ra))), static_cast<int>(std::lround(ca + t * (cb - ca))),
                  color, alpha);
        }
    }
};

void draw_panel(Canvas& cv, const Profile1D& p, int n_rays, double screen_depth)
{
    const std::array<double, 3> glass{0.80, 0.90, 0.97};
    const std::array<double, 3> edge{0.10, 0.25, 0.55};
    const std::array<double, 3> ray{0.95, 0.60, 0.05};
    const std::array<double, 3> screen{0.35, 0.35, 0.35};
    const std::array<double, 3> hit{0.80, 0.05, 0.05};

    for (int c = cv.col_offset; c < cv.col_offset + cv.width; ++c) {
        const double x = cv.x0 + (c - cv.col_offset) / static_cast<double>(cv.width - 1) * (cv.x1 - cv.x0);
        if (x < -0.5 * p.extent || x > 0.5 * p.extent) continue;
        const int top = static_cast<int>(std::lround(cv.pz(p.base_thickness + p.height_at(x))));
        const int bottom = static_cast<int>(std::lround(cv.pz(0.0)));
        for (int r = bottom; r <= top; ++r) cv.blend(r, c, glass, 1.0);
    }
    for (int j = 0; j + 1 < p.size(); ++j)
        cv.line(p.node_x(j), p.base_thickness + p.heights[j], p.node_x(j + 1), p.base_thickness + p.heights[j + 1],
                edge, 1.0);
    cv.line(-0.5 * p.extent, 0.0, 0.5 * p.extent, 0.0, edge, 1.0);
    cv.line(cv.x0, -screen_depth, cv.x1, -screen_depth, screen, 1.0);
    for (const Ray2d& r : trace_rays(p, n_rays, screen_depth)) {
        cv.line(r.entry_x, cv.z1, r.entry_x, r.surface_z, ray, 0.6);
        cv.line(r.entry_x, r.surface_z, r.bottom_x, 0.0, ray, 0.6);
        cv.line(r.bottom_x, 0.0, r.screen_x, -screen_depth, ray, 0.6);
        const int c = static_cast<int>(std::lround(cv.px(r.screen_x)));
        const int row = static_cast<int>(std::lround(cv.pz(-screen_depth)));
        for (int dr = -2; dr <= 2; ++dr)
            for (int dc = -1; dc <= 1; ++dc) cv.blend(row + dr, c + dc, hit, 1.0);
    }
}

} // namespace

Grid draw_panels(const DemoResult& demo, int n_rays, double screen_depth, int panel_px)
{
    require(panel_px >= 16, "panel size too small");
    double top = 0.0;
    for (const Profile1D* p : {&demo.truth, &demo.init, &demo.run.profile})
        for (double h : p->heights) top = std::max(top, p->base_thickness + h);
    const double margin = 0.15 * (top + screen_depth);
    const int rows = panel_px * 3 / 4;
    const int gap = 8;
    Canvas cv{Grid(3, rows, 3 * panel_px + 2 * gap, 1.0),
              -0.55 * demo.truth.extent,
              0.55 * demo.truth.extent,
              -screen_depth - margin,
              top + margin,
              0,
              panel_px};
    const Profile1D* panels[3] = {&demo.truth, &demo.init, &demo.run.profile};
    for (int i = 0; i < 3; ++i) {
        cv.col_offset = i * (panel_px + gap);
        draw_panel(cv, *panels[i], n_rays, screen_depth);
    }
    return cv.rgb;
}

} // namespace nsfc::toy2d
