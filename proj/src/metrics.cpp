#include "nsfc/metrics.hpp"

#include "nsfc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nsfc {

namespace {

void require_same_shape(const Grid& a, const Grid& b, const char* what)
{
    require(a.same_shape(b), std::string(what) + ": shape mismatch");
    require(a.size() > 0, std::string(what) + ": empty input");
}

double distance(std::span<const double> a, std::size_t i, std::span<const double> b, std::size_t j, int dim)
{
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
        const double d = a[i * dim + k] - b[j * dim + k];
        s += d * d;
    }
    return std::sqrt(s);
}

// Stable tau * log(sum exp(x / tau)) and its softmax weights.
double soft_max(std::span<const double> x, double tau, std::vector<double>* weights)
{
    const double peak = *std::max_element(x.begin(), x.end());
    double sum = 0.0;
    for (double v : x) sum += std::exp((v - peak) / tau);
    if (weights) {
        weights->resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) (*weights)[i] = std::exp((x[i] - peak) / tau) / sum;
    }
    return peak + tau * std::log(sum);
}

std::vector<double> gaussian_window(int size, double sigma)
{
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    const int half = size / 2;
    double sum = 0.0;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double d2 = (r - half) * (r - half) + (c - half) * (c - half);
            w[r * size + c] = std::exp(-d2 / (2.0 * sigma * sigma));
            sum += w[r * size + c];
        }
    for (double& v : w) v /= sum;
    return w;
}

} // namespace

double l_irrad(const Grid& estimate, const Grid& target)
{
    require_same_shape(estimate, target, "l_irrad");
    double sum = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const double d = estimate.values[i] - target.values[i];
        sum += d * d;
    }
    return sum / static_cast<double>(estimate.size());
}

Grid l_irrad_backward(const Grid& estimate, const Grid& target)
{
    require_same_shape(estimate, target, "l_irrad_backward");
    Grid g(estimate.channels, estimate.rows, estimate.cols);
    const double scale = 2.0 / static_cast<double>(estimate.size());
    for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = scale * (estimate.values[i] - target.values[i]);
    return g;
}

double l_rel(const Grid& estimate, const Grid& truth)
{
    require_same_shape(estimate, truth, "l_rel");
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = estimate.values[i] - truth.values[i];
        num += d * d;
        den += truth.values[i] * truth.values[i];
    }
    require(den > 0.0, "l_rel: ground truth has zero norm");
    return std::sqrt(num / den);
}

double l_rel(const HeightField& estimate, const HeightField& truth) { return l_rel(estimate.heights(), truth.heights()); }

void SsimParams::validate() const
{
    require(window >= 3 && window % 2 == 1, "SSIM window must be odd and >= 3");
    require(gaussian_sigma > 0.0, "SSIM sigma must be positive");
    require(k1 > 0.0 && k2 > 0.0, "SSIM constants must be positive");
    if (dynamic_range) require(*dynamic_range > 0.0, "SSIM dynamic range must be positive");
}

double ssim(const Grid& a, const Grid& b, const SsimParams& params)
{
    params.validate();
    require_same_shape(a, b, "ssim");
    require(a.channels == 1, "ssim: single-channel grids only");
    require(a.rows >= params.window && a.cols >= params.window, "ssim: image smaller than the window");

    double range = 0.0;
    if (params.dynamic_range) {
        range = *params.dynamic_range;
    } else {
        range = *std::max_element(b.values.begin(), b.values.end());
        require(range > 0.0, "ssim: reference maximum must be positive (set dynamic_range)");
    }
    const double c1 = (params.k1 * range) * (params.k1 * range);
    const double c2 = (params.k2 * range) * (params.k2 * range);

    const int win = params.window;
    const std::vector<double> w = gaussian_window(win, params.gaussian_sigma);
    double total = 0.0;
    int count = 0;
    for (int r = 0; r + win <= a.rows; ++r) {
        for (int c = 0; c + win <= a.cols; ++c) {
            double mu_a = 0, mu_b = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wt = w[i * win + j];
                    mu_a += wt * a.at(0, r + i, c + j);
                    mu_b += wt * b.at(0, r + i, c + j);
                }
            double var_a = 0, var_b = 0, cov = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double wt = w[i * win + j];
                    const double da = a.at(0, r + i, c + j) - mu_a;
                    const double db = b.at(0, r + i, c + j) - mu_b;
                    var_a += wt * da * da;
                    var_b += wt * db * db;
                    cov += wt * da * db;
                }
            total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                     ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            ++count;
        }
    }
    return total / count;
}

double hausdorff(std::span<const double> a, std::span<const double> b, int dim)
{
    require(dim >= 1, "hausdorff: dimension must be >= 1");
    require(!a.empty() && !b.empty(), "hausdorff: point sets must be non-empty");
    require(a.size() % dim == 0 && b.size() % dim == 0, "hausdorff: size is not a multiple of dim");
    const std::size_t na = a.size() / dim;
    const std::size_t nb = b.size() / dim;

    auto directed = [&](std::span<const double> p, std::size_t np, std::span<const double> q, std::size_t nq) {
        double worst = 0.0;
        for (std::size_t i = 0; i < np; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < nq; ++j) best = std::min(best, distance(p, i, q, j, dim));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(directed(a, na, b, nb), directed(b, nb, a, na));
}

SoftHausdorff soft_hausdorff(std::span<const double> a, std::span<const double> b, int dim, double tau,
                             double outer_tau)
{
    require(tau > 0.0, "soft_hausdorff: temperature must be positive");
    require(outer_tau >= 0.0, "soft_hausdorff: outer temperature must be non-negative");
    if (outer_tau == 0.0) outer_tau = tau;
    require(dim >= 1 && !a.empty() && !b.empty(), "soft_hausdorff: point sets must be non-empty");
    require(a.size() % dim == 0 && b.size() % dim == 0, "soft_hausdorff: size is not a multiple of dim");
    const std::size_t na = a.size() / dim;
    const std::size_t nb = b.size() / dim;

    std::vector<double> dist(na * nb);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) dist[i * nb + j] = distance(a, i, b, j, dim);

    // Soft minimum over b for each a (row weights) and over a for each b.
    std::vector<double> row_min(na), col_min(nb);
    std::vector<double> row_w(na * nb), col_w(na * nb);
    std::vector<double> scratch, weights;
    for (std::size_t i = 0; i < na; ++i) {
        scratch.assign(nb, 0.0);
        for (std::size_t j = 0; j < nb; ++j) scratch[j] = -dist[i * nb + j];
        row_min[i] = -soft_max(scratch, tau, &weights);
        for (std::size_t j = 0; j < nb; ++j) row_w[i * nb + j] = weights[j];
    }
    for (std::size_t j = 0; j < nb; ++j) {
        scratch.assign(na, 0.0);
        for (std::size_t i = 0; i < na; ++i) scratch[i] = -dist[i * nb + j];
        col_min[j] = -soft_max(scratch, tau, &weights);
        for (std::size_t i = 0; i < na; ++i) col_w[i * nb + j] = weights[i];
    }

    std::vector<double> p, q, outer;
    const double d_ab = soft_max(row_min, outer_tau, &p);
    const double d_ba = soft_max(col_min, outer_tau, &q);
    const double both[2] = {d_ab, d_ba};
    SoftHausdorff out;
    out.value = soft_max(both, outer_tau, &outer);

    out.grad_a.assign(a.size(), 0.0);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            const double d = dist[i * nb + j];
            if (d == 0.0) continue;
            const double coeff = outer[0] * p[i] * row_w[i * nb + j] + outer[1] * q[j] * col_w[i * nb + j];
            if (coeff == 0.0) continue;
            for (int k = 0; k < dim; ++k) out.grad_a[i * dim + k] += coeff * (a[i * dim + k] - b[j * dim + k]) / d;
        }
    }
    return out;
}

} // namespace nsfc
