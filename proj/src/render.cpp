#include "nsfc/render.hpp"

#include "nsfc/error.hpp"
#include "nsfc/parallel.hpp"
#include "nsfc/rng.hpp"

#include <ceres/jet.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nsfc {

namespace {

constexpr std::int64_t kBatchSize = 4096;
constexpr double kTruncation = 3.0;                          // sigmas
const double kRimValue = std::exp(-0.5 * kTruncation * kTruncation);
constexpr double kMaxAnisotropy = 4.0;

template <class T>
using Vec3T = Eigen::Matrix<T, 3, 1>;

using Jet3 = ceres::Jet<double, 3>;

template <class T>
bool refract_into(const Vec3T<T>& dir, Vec3T<T> normal, double eta, Vec3T<T>& out)
{
    using std::sqrt;
    T cos_i = -dir.dot(normal);
    if (cos_i < T(0.0)) {
        normal = -normal;
        cos_i = -cos_i;
    }
    const T k = T(1.0) - eta * eta * (T(1.0) - cos_i * cos_i);
    if (k < T(0.0)) return false;
    out = eta * dir + (eta * cos_i - sqrt(k)) * normal;
    return true;
}

enum class PathFate { screen, tir };

template <class T>
struct PathEnd
{
    PathFate fate = PathFate::tir;
    T x{};
    T y{};
    Vec3T<T> exit_dir;
};

// Slab model: refract at the height-field top surface, travel to the flat
// bottom z = 0, refract into air and continue to the screen plane.
template <class T>
PathEnd<T> trace_path(const T& h, const T& gx, const T& gy, double x, double y, const Vec3& incident,
                      double n_glass, double base_thickness, double screen_z)
{
    using std::sqrt;
    PathEnd<T> end;
    Vec3T<T> normal(-gx, -gy, T(1.0));
    normal /= sqrt(normal.squaredNorm());

    const Vec3T<T> in = incident.cast<T>();
    Vec3T<T> inside;
    if (!refract_into<T>(in, normal, 1.0 / n_glass, inside)) return end;
    if (!(inside.z() < T(0.0))) return end;

    const T top = T(base_thickness) + h;
    const T s = top / (-inside.z());
    const T bx = T(x) + s * inside.x();
    const T by = T(y) + s * inside.y();

    Vec3T<T> out;
    if (!refract_into<T>(inside, Vec3T<T>(T(0.0), T(0.0), T(1.0)), n_glass, out)) return end;
    if (!(out.z() < T(0.0))) return end;

    const T s2 = T(-screen_z) / (-out.z());
    end.fate = PathFate::screen;
    end.x = bx + s2 * out.x();
    end.y = by + s2 * out.y();
    end.exit_dir = out;
    return end;
}

// Bilinear patch of the node grid containing (x, y).
struct Patch
{
    int row = 0;
    int col = 0;
    double tx = 0.0;
    double ty = 0.0;
};

Patch locate(const HeightField& field, double x, double y)
{
    const int n = field.size();
    const double fx = (x + 0.5 * field.extent().x) / field.spacing_x();
    const double fy = (y + 0.5 * field.extent().y) / field.spacing_y();
    Patch p;
    p.col = std::clamp(static_cast<int>(std::floor(fx)), 0, n - 2);
    p.row = std::clamp(static_cast<int>(std::floor(fy)), 0, n - 2);
    p.tx = fx - p.col;
    p.ty = fy - p.row;
    return p;
}

struct LocalSurface
{
    double h = 0.0;
    double gx = 0.0;
    double gy = 0.0;
};

LocalSurface evaluate(const HeightField& field, const Patch& p)
{
    const double h00 = field.at(p.row, p.col);
    const double h01 = field.at(p.row, p.col + 1);
    const double h10 = field.at(p.row + 1, p.col);
    const double h11 = field.at(p.row + 1, p.col + 1);
    LocalSurface s;
    s.h = (1 - p.ty) * ((1 - p.tx) * h00 + p.tx * h01) + p.ty * ((1 - p.tx) * h10 + p.tx * h11);
    s.gx = ((1 - p.ty) * (h01 - h00) + p.ty * (h11 - h10)) / field.spacing_x();
    s.gy = ((1 - p.tx) * (h10 - h00) + p.tx * (h11 - h01)) / field.spacing_y();
    return s;
}

struct Photon
{
    double x = 0.0;
    double y = 0.0;
    Vec3 dir{0.0, 0.0, -1.0};
};

Photon sample_photon(Rng& rng, const SceneParams& scene)
{
    Photon ph;
    ph.x = (rng.uniform() - 0.5) * scene.substrate_extent.x;
    ph.y = (rng.uniform() - 0.5) * scene.substrate_extent.y;
    if (scene.emission_angle > 0.0) {
        const double cos_t = 1.0 - rng.uniform() * (1.0 - std::cos(scene.emission_angle));
        const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
        const double phi = 2.0 * std::numbers::pi * rng.uniform();
        ph.dir = Vec3(sin_t * std::cos(phi), sin_t * std::sin(phi), -cos_t);
    }
    return ph;
}

// Sensor position of a screen hit in pixel units.
Eigen::Vector2d to_pixels(const SceneParams& scene, double x, double y)
{
    return {(x - scene.screen_pos.x() + 0.5 * scene.substrate_extent.x) / scene.pixel_pitch_x(),
            (y - scene.screen_pos.y() + 0.5 * scene.substrate_extent.y) / scene.pixel_pitch_y()};
}

template <class T>
struct KernelMetric
{
    T xx{};
    T xy{};
    T yy{};
};

// Quadratic form q = a^T M a of the footprint for offset a (pixels). Below
// the anisotropy cap, M = (I - l l^T) / sigma^2 with l the lateral part of
// the unit exit direction, which stays smooth at normal incidence.
template <class T>
KernelMetric<T> kernel_metric(const Vec3T<T>& exit_dir, double sigma)
{
    using std::abs;
    const double inv = 1.0 / (sigma * sigma);
    const T lx = exit_dir.x();
    const T ly = exit_dir.y();
    if (abs(exit_dir.z()) >= 1.0 / kMaxAnisotropy)
        return {inv * (1.0 - lx * lx), -inv * lx * ly, inv * (1.0 - ly * ly)};
    const T coef = (1.0 / (kMaxAnisotropy * kMaxAnisotropy) - 1.0) * inv / (lx * lx + ly * ly);
    return {inv + coef * lx * lx, coef * lx * ly, inv + coef * ly * ly};
}

struct KernelTap
{
    int row;
    int col;
    double k;
};

// Enumerates covered pixels; returns the normalisation sum over all of them.
double kernel_taps(const Footprint& fp, const Eigen::Vector2d& center, std::vector<KernelTap>& taps)
{
    taps.clear();
    const Eigen::Vector2d e1 = fp.major_axis;
    const Eigen::Vector2d e2(-e1.y(), e1.x());
    const double inv1 = 1.0 / (fp.major_sigma * fp.major_sigma);
    const double inv2 = 1.0 / (fp.sigma * fp.sigma);
    const double radius = kTruncation * std::max(fp.major_sigma, fp.sigma);

    const int c_lo = static_cast<int>(std::ceil(center.x() - 0.5 - radius));
    const int c_hi = static_cast<int>(std::floor(center.x() - 0.5 + radius));
    const int r_lo = static_cast<int>(std::ceil(center.y() - 0.5 - radius));
    const int r_hi = static_cast<int>(std::floor(center.y() - 0.5 + radius));

    double sum = 0.0;
    for (int r = r_lo; r <= r_hi; ++r) {
        for (int c = c_lo; c <= c_hi; ++c) {
            const Eigen::Vector2d a(c + 0.5 - center.x(), r + 0.5 - center.y());
            const double p1 = a.dot(e1);
            const double p2 = a.dot(e2);
            const double q = p1 * p1 * inv1 + p2 * p2 * inv2;
            if (q >= kTruncation * kTruncation) continue;
            const double g = std::exp(-0.5 * q);
            const double k = g - kRimValue;
            if (k <= 0.0) continue;
            taps.push_back({r, c, k});
            sum += k;
        }
    }
    return sum;
}

bool on_sensor(int row, int col, int m) { return row >= 0 && row < m && col >= 0 && col < m; }

struct Accumulator
{
    Irradiance image;
    RenderStats stats;
};

void check_scene_field(const HeightField& field, const SceneParams& scene)
{
    scene.validate();
    require(field.size() >= 2, "height field must be at least 2 x 2");
    require(std::abs(field.extent().x - scene.substrate_extent.x) <= 1e-12 &&
                std::abs(field.extent().y - scene.substrate_extent.y) <= 1e-12,
            "height field extent does not match the scene substrate");
    require(std::abs(field.base_thickness() - scene.base_thickness) <= 1e-12,
            "height field base thickness does not match the scene");
}

std::int64_t batch_count(const SceneParams& scene) { return (scene.n_l + kBatchSize - 1) / kBatchSize; }

} // namespace

double ior(const SpectralIor& spec, double wavelength_nm)
{
    require(wavelength_nm > 0.0, "wavelength must be positive");
    const double l2 = (wavelength_nm * 1e-3) * (wavelength_nm * 1e-3);
    double n2 = 1.0;
    for (std::size_t i = 0; i < spec.b.size(); ++i) {
        if (spec.b[i] == 0.0) continue;
        const double denom = l2 - spec.c[i];
        require(denom != 0.0, "Sellmeier pole at the requested wavelength");
        n2 += spec.b[i] * l2 / denom;
    }
    if (!(n2 > 0.0)) throw Error(ErrorKind::numeric, "Sellmeier model gives n^2 <= 0");
    return std::sqrt(n2);
}

void SceneParams::validate() const
{
    require(field_res >= 2, "field resolution must be >= 2");
    require(sensor_res >= 2, "sensor resolution must be >= 2");
    require(n_l >= 1, "n_l must be >= 1");
    require(!wavelengths.empty(), "at least one wavelength is required");
    require(radiosity.size() == wavelengths.size(), "radiosity needs one entry per wavelength");
    for (double r : radiosity) require(r >= 0.0 && std::isfinite(r), "radiosity must be non-negative");
    for (double w : wavelengths) require(w > 0.0, "wavelengths must be positive");
    require(smoothing > 0.0, "smoothing must be positive");
    require(emission_angle >= 0.0 && emission_angle < 0.5 * std::numbers::pi, "emission angle must be in [0, pi/2)");
    require(substrate_extent.x > 0.0 && substrate_extent.y > 0.0, "substrate extent must be positive");
    require(base_thickness > 0.0, "base thickness must be positive");
    require(screen_pos.z() < 0.0, "screen must lie below the substrate bottom (z < 0)");
    require(light_pos.z() > base_thickness, "light must lie above the substrate");
}

SceneParams SceneParams::full_scale()
{
    SceneParams s;
    s.field_res = 128;
    s.sensor_res = 512;
    s.n_l = 1000000;
    return s;
}

SceneParams SceneParams::desk() { return SceneParams{}; }

Irradiance Irradiance::zeros(const SceneParams& scene)
{
    Irradiance e;
    e.values = Grid(scene.n_w(), scene.sensor_res, scene.sensor_res);
    e.pitch_x = scene.pixel_pitch_x();
    e.pitch_y = scene.pixel_pitch_y();
    return e;
}

Irradiance Irradiance::from_grid(Grid values, const SceneParams& scene)
{
    require(values.channels == scene.n_w() && values.rows == scene.sensor_res && values.cols == scene.sensor_res,
            "irradiance grid does not match the scene sensor");
    Irradiance e;
    e.values = std::move(values);
    e.pitch_x = scene.pixel_pitch_x();
    e.pitch_y = scene.pixel_pitch_y();
    return e;
}

Vec3 surface_normal(const HeightField& field, Point2 p)
{
    require(field.contains(p), "surface_normal: point outside the height field extent");
    const LocalSurface s = evaluate(field, locate(field, p.x, p.y));
    return Vec3(-s.gx, -s.gy, 1.0).normalized();
}

std::optional<Vec3> refract(const Vec3& dir, const Vec3& normal, double eta)
{
    require(std::abs(dir.norm() - 1.0) < 1e-9 && std::abs(normal.norm() - 1.0) < 1e-9,
            "refract: direction and normal must be unit vectors");
    Vec3 out;
    if (!refract_into<double>(dir, normal, eta, out)) return std::nullopt;
    return out;
}

Footprint footprint_for(const Vec3& exit_dir, double smoothing)
{
    Footprint fp;
    fp.sigma = smoothing / 16.0;
    const Eigen::Vector2d lateral(exit_dir.x(), exit_dir.y());
    const double len = lateral.norm();
    if (len > 1e-12) fp.major_axis = lateral / len;
    const double cz = std::max(std::abs(exit_dir.z()), 1.0 / kMaxAnisotropy);
    fp.major_sigma = fp.sigma / cz;
    return fp;
}

double splat(Irradiance& accum, int channel, Eigen::Vector2d center, const Vec3& exit_dir, double energy,
             double smoothing)
{
    require(energy >= 0.0, "splat energy must be non-negative");
    if (energy == 0.0) return 0.0;
    const int m = accum.values.rows;
    thread_local std::vector<KernelTap> taps;
    const double total = kernel_taps(footprint_for(exit_dir, smoothing), center, taps);
    const double to_irradiance = energy / accum.pixel_area();

    if (total <= 0.0) {
        const int r = static_cast<int>(std::floor(center.y()));
        const int c = static_cast<int>(std::floor(center.x()));
        if (!on_sensor(r, c, m)) return energy;
        accum.values.at(channel, r, c) += to_irradiance;
        return 0.0;
    }

    double lost = 0.0;
    for (const KernelTap& t : taps) {
        const double w = t.k / total;
        if (on_sensor(t.row, t.col, m))
            accum.values.at(channel, t.row, t.col) += to_irradiance * w;
        else
            lost += energy * w;
    }
    return lost;
}

Irradiance render(const HeightField& field, const SceneParams& scene, std::uint64_t seed, RenderStats* stats)
{
    check_scene_field(field, scene);
    const int n_w = scene.n_w();
    std::vector<double> n_glass(static_cast<std::size_t>(n_w));
    for (int c = 0; c < n_w; ++c) n_glass[c] = ior(scene.glass, scene.wavelengths[c]);

    const std::int64_t batches = batch_count(scene);
    const int chunks = static_cast<int>(std::min<std::int64_t>(reduction_chunks(), batches));
    std::vector<Accumulator> acc(static_cast<std::size_t>(chunks));

    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t chunk) {
        Accumulator& a = acc[chunk];
        a.image = Irradiance::zeros(scene);
        a.stats.deposited.assign(n_w, 0.0);
        a.stats.offscreen.assign(n_w, 0.0);
        a.stats.tir.assign(n_w, 0.0);
        for (std::int64_t b = static_cast<std::int64_t>(chunk); b < batches; b += chunks) {
            Rng rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
            const std::int64_t count = std::min(kBatchSize, scene.n_l - b * kBatchSize);
            for (std::int64_t i = 0; i < count; ++i) {
                const Photon ph = sample_photon(rng, scene);
                const LocalSurface s = evaluate(field, locate(field, ph.x, ph.y));
                for (int c = 0; c < n_w; ++c) {
                    const double energy = scene.emitted_power(c) / static_cast<double>(scene.n_l);
                    const PathEnd<double> end = trace_path<double>(s.h, s.gx, s.gy, ph.x, ph.y, ph.dir, n_glass[c],
                                                                   scene.base_thickness, scene.screen_pos.z());
                    if (end.fate == PathFate::tir) {
                        a.stats.tir[c] += energy;
                        continue;
                    }
                    const double lost =
                        splat(a.image, c, to_pixels(scene, end.x, end.y), end.exit_dir, energy, scene.smoothing);
                    a.stats.offscreen[c] += lost;
                    a.stats.deposited[c] += energy - lost;
                }
            }
        }
    });

    Irradiance out = Irradiance::zeros(scene);
    RenderStats total;
    total.deposited.assign(n_w, 0.0);
    total.offscreen.assign(n_w, 0.0);
    total.tir.assign(n_w, 0.0);
    for (const Accumulator& a : acc) {
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values.values[i] += a.image.values.values[i];
        for (int c = 0; c < n_w; ++c) {
            total.deposited[c] += a.stats.deposited[c];
            total.offscreen[c] += a.stats.offscreen[c];
            total.tir[c] += a.stats.tir[c];
        }
    }
    for (double v : out.values.values)
        if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "render produced a non-finite irradiance");
    if (stats) {
        total.emitted.resize(n_w);
        for (int c = 0; c < n_w; ++c) total.emitted[c] = scene.emitted_power(c);
        *stats = std::move(total);
    }
    return out;
}

Grid render_backward(const HeightField& field, const SceneParams& scene, std::uint64_t seed, const Grid& dL_dE,
                     const BackwardOptions& options)
{
    check_scene_field(field, scene);
    const int n_w = scene.n_w();
    const int m = scene.sensor_res;
    require(dL_dE.channels == n_w && dL_dE.rows == m && dL_dE.cols == m,
            "render_backward: dL_dE shape does not match the sensor");
    std::vector<double> n_glass(static_cast<std::size_t>(n_w));
    for (int c = 0; c < n_w; ++c) n_glass[c] = ior(scene.glass, scene.wavelengths[c]);

    const int n = field.size();
    const double sx = field.spacing_x();
    const double sy = field.spacing_y();
    const double pixel_area = scene.pixel_pitch_x() * scene.pixel_pitch_y();

    const std::int64_t batches = batch_count(scene);
    const int chunks = static_cast<int>(std::min<std::int64_t>(reduction_chunks(), batches));
    std::vector<Grid> partial(static_cast<std::size_t>(chunks));

    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t chunk) {
        Grid& grad = partial[chunk];
        grad = Grid(1, n, n);
        std::vector<KernelTap> taps;
        for (std::int64_t b = static_cast<std::int64_t>(chunk); b < batches; b += chunks) {
            Rng rng(mix_seed(seed, static_cast<std::uint64_t>(b)));
            const std::int64_t count = std::min(kBatchSize, scene.n_l - b * kBatchSize);
            for (std::int64_t i = 0; i < count; ++i) {
                const Photon ph = sample_photon(rng, scene);
                const Patch patch = locate(field, ph.x, ph.y);
                const LocalSurface s = evaluate(field, patch);
                Eigen::Vector3d d_local = Eigen::Vector3d::Zero(); // dL/d(h, gx, gy)
                for (int c = 0; c < n_w; ++c) {
                    const double energy = scene.emitted_power(c) / static_cast<double>(scene.n_l);
                    const PathEnd<double> end = trace_path<double>(s.h, s.gx, s.gy, ph.x, ph.y, ph.dir, n_glass[c],
                                                                   scene.base_thickness, scene.screen_pos.z());
                    if (end.fate == PathFate::tir || energy == 0.0) continue;

                    const Footprint fp = footprint_for(end.exit_dir, scene.smoothing);
                    const Eigen::Vector2d center = to_pixels(scene, end.x, end.y);
                    const double total = kernel_taps(fp, center, taps);
                    if (total <= 0.0) continue;

                    bool touches = false;
                    for (const KernelTap& t : taps)
                        if (on_sensor(t.row, t.col, m) && dL_dE.at(c, t.row, t.col) != 0.0) touches = true;
                    if (!touches) continue;

                    const PathEnd<Jet3> jet = trace_path<Jet3>(Jet3(s.h, 0), Jet3(s.gx, 1), Jet3(s.gy, 2), ph.x,
                                                               ph.y, ph.dir, n_glass[c], scene.base_thickness,
                                                               scene.screen_pos.z());
                    if (jet.fate == PathFate::tir) continue;
                    const Jet3 cx = (jet.x - scene.screen_pos.x() + 0.5 * scene.substrate_extent.x) /
                                    scene.pixel_pitch_x();
                    const Jet3 cy = (jet.y - scene.screen_pos.y() + 0.5 * scene.substrate_extent.y) /
                                    scene.pixel_pitch_y();
                    KernelMetric<Jet3> metric;
                    if (options.footprint_shape) {
                        metric = kernel_metric<Jet3>(jet.exit_dir, fp.sigma);
                    } else {
                        const KernelMetric<double> fixed = kernel_metric<double>(end.exit_dir, fp.sigma);
                        metric = {Jet3(fixed.xx), Jet3(fixed.xy), Jet3(fixed.yy)};
                    }
                    // Tap set is frozen at the primal; k vanishes on its rim.
                    Jet3 sum(0.0);
                    Jet3 weighted(0.0);
                    for (const KernelTap& t : taps) {
                        const Jet3 ax = (t.col + 0.5) - cx;
                        const Jet3 ay = (t.row + 0.5) - cy;
                        const Jet3 q = metric.xx * ax * ax + 2.0 * metric.xy * ax * ay + metric.yy * ay * ay;
                        const Jet3 k = exp(-0.5 * q) - kRimValue;
                        sum += k;
                        if (on_sensor(t.row, t.col, m)) weighted += dL_dE.at(c, t.row, t.col) * k;
                    }
                    d_local += (energy / pixel_area) * (weighted / sum).v;
                }
                if (d_local.isZero(0.0)) continue;

                const double tx = patch.tx;
                const double ty = patch.ty;
                const double dh = d_local.x();
                const double dgx = d_local.y() / sx;
                const double dgy = d_local.z() / sy;
                grad.at(0, patch.row, patch.col) += (1 - tx) * (1 - ty) * dh - (1 - ty) * dgx - (1 - tx) * dgy;
                grad.at(0, patch.row, patch.col + 1) += tx * (1 - ty) * dh + (1 - ty) * dgx - tx * dgy;
                grad.at(0, patch.row + 1, patch.col) += (1 - tx) * ty * dh - ty * dgx + (1 - tx) * dgy;
                grad.at(0, patch.row + 1, patch.col + 1) += tx * ty * dh + ty * dgx + tx * dgy;
            }
        }
    });

    Grid out(1, n, n);
    for (const Grid& g : partial)
        for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += g.values[i];
    for (double v : out.values)
        if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "render_backward produced a non-finite gradient");
    return out;
}

Grid finite_diff_gradient(const std::function<double(const Grid&)>& fn, const Grid& x, double eps)
{
    require(eps > 0.0, "finite difference step must be positive");
    Grid grad(x.channels, x.rows, x.cols);
    Grid probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe.values[i] = x.values[i] + eps;
        const double up = fn(probe);
        probe.values[i] = x.values[i] - eps;
        const double down = fn(probe);
        probe.values[i] = x.values[i];
        grad.values[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

Grid finite_diff_gradient(const HeightField& field, const SceneParams& scene, std::uint64_t seed,
                          const std::function<double(const Irradiance&)>& loss, double eps)
{
    return finite_diff_gradient(
        [&](const Grid& heights) {
            const HeightField probe(heights, field.extent(), field.base_thickness());
            return loss(render(probe, scene, seed));
        },
        field.heights(), eps);
}

} // namespace nsfc
