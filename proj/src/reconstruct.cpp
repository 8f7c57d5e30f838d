#include "nsfc/reconstruct.hpp"

#include "nsfc/error.hpp"
#include "nsfc/metrics.hpp"
#include "nsfc/nn/models.hpp"
#include "nsfc/parallel.hpp"
#include "nsfc/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace nsfc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double max_abs(const Grid& g)
{
    double m = 0.0;
    for (double v : g.values) m = std::max(m, std::abs(v));
    return m;
}

void score(IterationRecord& rec, const HeightField& x, const HeightField* truth)
{
    if (!truth || max_abs(truth->heights()) == 0.0) return;
    rec.l_rel = l_rel(x, *truth);
    rec.ssim = ssim(x.heights(), truth->heights());
}

std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

void ClassicalConfig::validate() const
{
    require(alpha > 0.0 && std::isfinite(alpha), "classical step size must be positive");
    require(threshold >= 0.0, "classical threshold must be non-negative");
    require(volume_weight >= 0.0 && volume_weight <= 1.0, "classical volume weight must lie in [0, 1]");
    require(max_height > 0.0, "classical height cap must be positive");
}

HeightField classical_step(const HeightField& x, const Grid& grad, const ClassicalConfig& cfg)
{
    cfg.validate();
    require(grad.same_shape(x.heights()), "classical_step: gradient shape does not match the field");
    const double step_max = cfg.alpha * max_abs(grad);
    const double cutoff = cfg.threshold * step_max;

    HeightField next = x;
    Grid& h = next.heights();
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double step = cfg.alpha * grad.values[i];
        if (cfg.threshold > 0.0 && std::abs(step) < cutoff) continue;
        h.values[i] = std::clamp(x.heights().values[i] - step, 0.0, cfg.max_height);
    }
    if (cfg.volume_weight > 0.0) {
        double before = 0.0;
        double after = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) {
            before += x.heights().values[i];
            after += h.values[i];
        }
        if (after > 0.0) {
            const double scale = (after + cfg.volume_weight * (before - after)) / after;
            for (double& v : h.values) v = std::clamp(v * scale, 0.0, cfg.max_height);
        }
    }
    return next;
}

std::string to_string(Method method) { return method == Method::nsfc ? "nsfc" : "classical"; }

Method parse_method(const std::string& name)
{
    if (name == "nsfc") return Method::nsfc;
    if (name == "classical") return Method::classical;
    throw Error(ErrorKind::invalid_argument, "unknown method '" + name + "' (expected nsfc or classical)");
}

double observe(ReconstructionState& state, const SceneParams& scene, const nn::Network* denoiser, std::uint64_t seed,
               bool with_gradient)
{
    state.e_sim = render(state.x, scene, seed);
    if (denoiser) state.e_sim = nn::denoise(*denoiser, state.e_sim);
    const double loss = l_irrad(state.e_sim.values, state.e_target.values);
    if (with_gradient) {
        const Grid dL_dE = nn::denoise_backward_identity(l_irrad_backward(state.e_sim.values, state.e_target.values));
        state.grad = render_backward(state.x, scene, seed, dL_dE);
    } else {
        state.grad = Grid(1, state.x.size(), state.x.size());
    }
    return loss;
}

void nsfc_step(ReconstructionState& state, const nn::Network& updater, const NsfcFlags& flags)
{
    const Grid grad = flags.no_gradient ? Grid(1, state.x.size(), state.x.size()) : state.grad;
    const Grid delta = nn::updater_forward(updater, state.x, grad, state.e_sim, state.e_target);
    Grid& h = state.x.heights();
    for (std::size_t i = 0; i < h.size(); ++i) h.values[i] = std::max(0.0, h.values[i] - delta.values[i]);
    ++state.iteration;
}

ReconstructionResult reconstruct(const Irradiance& target, const SceneParams& scene, const ReconstructOptions& options,
                                 const Networks& nets)
{
    scene.validate();
    require(options.iters >= 0, "iteration count must be non-negative");
    require(target.values.channels == scene.n_w() && target.values.rows == scene.sensor_res &&
                target.values.cols == scene.sensor_res,
            "target caustic does not match the scene sensor");
    if (options.truth)
        require(options.truth->size() == scene.field_res, "ground-truth field does not match the scene resolution");

    const nn::Network* denoiser = nullptr;
    if (options.method == Method::nsfc) {
        if (options.iters > 0 && !nets.updater) throw Error(ErrorKind::invalid_argument, "nsfc needs updater weights");
        if (!options.flags.no_denoiser) {
            if (!nets.denoiser)
                throw Error(ErrorKind::invalid_argument, "nsfc needs denoiser weights (or --no-denoiser)");
            denoiser = nets.denoiser;
        }
        if (nets.updater)
            require(nets.updater->in_channels() == 2 + 2 * scene.n_w(),
                    "updater weights were trained for a different wavelength count");
    } else {
        options.classical.validate();
        if (options.classical_denoise) denoiser = nets.denoiser;
    }
    const bool with_gradient = options.method == Method::classical || !options.flags.no_gradient;

    ReconstructionState state;
    state.x = HeightField::flat(scene.field_res, scene.substrate_extent, scene.base_thickness);
    state.e_target = target;

    ReconstructionResult result;
    double step_seconds = 0.0;
    for (int i = 0;; ++i) {
        const auto t0 = Clock::now();
        const bool last = i == options.iters;
        IterationRecord rec;
        rec.iteration = i;
        rec.l_irrad = observe(state, scene, denoiser, mix_seed(options.seed, static_cast<std::uint64_t>(i)),
                              with_gradient && !last);
        rec.seconds = step_seconds;
        score(rec, state.x, options.truth);
        state.history.push_back(rec);
        if (options.keep_trajectory) {
            result.fields.push_back(state.x);
            result.caustics.push_back(state.e_sim);
        }
        if (last) break;

        if (options.method == Method::nsfc) {
            nsfc_step(state, *nets.updater, options.flags);
        } else {
            state.x = classical_step(state.x, state.grad, options.classical);
            ++state.iteration;
        }
        state.x.validate();
        step_seconds = seconds_since(t0);
    }
    result.final_field = std::move(state.x);
    result.history = std::move(state.history);
    return result;
}

std::string history_csv(const std::vector<IterationRecord>& history)
{
    std::ostringstream os;
    os << "iteration,l_irrad,l_rel,ssim\n";
    for (const IterationRecord& r : history) {
        os << r.iteration << ',' << format_number(r.l_irrad) << ',' << (r.l_rel ? format_number(*r.l_rel) : "")
           << ',' << (r.ssim ? format_number(*r.ssim) : "") << '\n';
    }
    return os.str();
}

// ---- evaluation ---------------------------------------------------------------

std::string EvaluationReport::to_csv() const
{
    std::ostringstream os;
    os << "sample,method,iteration,ssim,l_rel\n";
    for (const EvaluationRow& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.ssim, r.l_rel);
        os << r.sample << ',' << r.method << ',' << r.iteration << ',' << buf << '\n';
    }
    return os.str();
}

double EvaluationReport::min_l_rel(const std::string& sample, const std::string& method) const
{
    for (const EvaluationRow& r : rows)
        if (r.sample == sample && r.method == method && r.iteration == "min") return r.l_rel;
    throw Error(ErrorKind::invalid_argument, "no evaluation row for " + sample + "/" + method);
}

double EvaluationReport::l_rel_at(const std::string& sample, const std::string& method, int iteration) const
{
    const std::string it = std::to_string(iteration);
    for (const EvaluationRow& r : rows)
        if (r.sample == sample && r.method == method && r.iteration == it) return r.l_rel;
    throw Error(ErrorKind::invalid_argument, "no evaluation row for " + sample + "/" + method + "/" + it);
}

EvaluationReport evaluate(const TestSet& test, const std::vector<MethodSpec>& methods, int iters, std::int64_t n_l,
                          std::uint64_t seed)
{
    require(!test.samples.empty(), "test set is empty");
    require(!methods.empty(), "no methods to evaluate");
    require(iters >= 0, "iteration count must be non-negative");
    const SceneParams scene = with_samples(test.scene, n_l);
    const std::size_t n_s = test.samples.size();
    const std::size_t n_m = methods.size();

    std::vector<std::vector<IterationRecord>> runs(n_s * n_m);
    parallel_for(runs.size(), [&](std::size_t job) {
        const std::size_t s = job / n_m;
        const MethodSpec& spec = methods[job % n_m];
        ReconstructOptions opt;
        opt.method = spec.method;
        opt.iters = iters;
        opt.seed = mix_seed(seed, s);
        opt.flags = spec.flags;
        opt.classical = spec.classical;
        opt.truth = &test.samples[s].field;
        runs[job] = reconstruct(test.samples[s].target, scene, opt, spec.nets).history;
    });

    EvaluationReport report;
    // Per-method accumulators over samples, keyed by iteration label.
    std::vector<std::map<int, std::pair<double, double>>> sums(n_m);
    for (std::size_t s = 0; s < n_s; ++s) {
        for (std::size_t m = 0; m < n_m; ++m) {
            const auto& hist = runs[s * n_m + m];
            double best_l = std::numeric_limits<double>::infinity();
            double best_s = -std::numeric_limits<double>::infinity();
            for (const IterationRecord& r : hist) {
                const double lr = r.l_rel.value_or(std::numeric_limits<double>::quiet_NaN());
                const double ss = r.ssim.value_or(std::numeric_limits<double>::quiet_NaN());
                report.rows.push_back({test.samples[s].id, methods[m].name, std::to_string(r.iteration), ss, lr});
                best_l = std::min(best_l, lr);
                best_s = std::max(best_s, ss);
                sums[m][r.iteration].first += ss;
                sums[m][r.iteration].second += lr;
            }
            report.rows.push_back({test.samples[s].id, methods[m].name, "min", best_s, best_l});
            sums[m][-1].first += best_s;
            sums[m][-1].second += best_l;
        }
    }
    const double inv = 1.0 / static_cast<double>(n_s);
    for (std::size_t m = 0; m < n_m; ++m) {
        for (const auto& [it, sum] : sums[m]) {
            if (it < 0) continue;
            report.rows.push_back({"avg", methods[m].name, std::to_string(it), sum.first * inv, sum.second * inv});
        }
        report.rows.push_back({"avg", methods[m].name, "min", sums[m][-1].first * inv, sums[m][-1].second * inv});
    }
    return report;
}

ClassicalGrid default_classical_grid(const Irradiance& target, const SceneParams& scene, std::uint64_t seed)
{
    ReconstructionState state;
    state.x = HeightField::flat(scene.field_res, scene.substrate_extent, scene.base_thickness);
    state.e_target = target;
    observe(state, scene, nullptr, mix_seed(seed, 0));
    const double g = max_abs(state.grad);
    require(g > 0.0, "classical grid: the initial gradient vanishes");
    ClassicalGrid grid;
    for (double step : {2e-5, 6e-5, 2e-4, 6e-4, 2e-3}) grid.alpha.push_back(step / g);
    return grid;
}

ClassicalConfig tune_classical(const TestSample& sample, const SceneParams& scene, int iters, std::uint64_t seed,
                               const ClassicalGrid& grid)
{
    require(!grid.alpha.empty() && !grid.threshold.empty() && !grid.volume_weight.empty(),
            "classical grid must not be empty");
    std::vector<ClassicalConfig> candidates;
    for (double a : grid.alpha)
        for (double t : grid.threshold)
            for (double v : grid.volume_weight) candidates.push_back({a, t, v, ClassicalConfig{}.max_height});

    std::vector<double> best(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t k) {
        ReconstructOptions opt;
        opt.method = Method::classical;
        opt.iters = iters;
        opt.seed = seed;
        opt.classical = candidates[k];
        opt.truth = &sample.field;
        const auto hist = reconstruct(sample.target, scene, opt).history;
        double b = std::numeric_limits<double>::infinity();
        for (const IterationRecord& r : hist) b = std::min(b, r.l_rel.value_or(b));
        best[k] = b;
    });
    const auto it = std::min_element(best.begin(), best.end());
    return candidates[static_cast<std::size_t>(it - best.begin())];
}

} // namespace nsfc
