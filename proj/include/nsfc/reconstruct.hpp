#pragma once

#include "nsfc/datasets.hpp"
#include "nsfc/heightfield.hpp"
#include "nsfc/nn/network.hpp"
#include "nsfc/render.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nsfc {

// Thresholded projected Landweber step with a volume pull.
struct ClassicalConfig
{
    double alpha = 1e-4;        // step size
    double threshold = 0.0;     // tau_p, relative to max |alpha * grad|
    double volume_weight = 0.0; // gamma in [0, 1]
    double max_height = 5e-3;   // projection cap, meters

    void validate() const;
};

// x - alpha * grad, keeping entries whose step is below threshold * max step,
// projected to [0, max_height]. With gamma > 0 the elevations are rescaled so
// the total volume moves a fraction gamma back towards the volume of x.
[[nodiscard]] HeightField classical_step(const HeightField& x, const Grid& grad, const ClassicalConfig& cfg);

enum class Method { nsfc, classical };
[[nodiscard]] std::string to_string(Method method);
[[nodiscard]] Method parse_method(const std::string& name);

struct NsfcFlags
{
    bool no_denoiser = false;
    bool no_gradient = false; // feed zeros instead of dL/dx to the updater
};

struct IterationRecord
{
    int iteration = 0;
    double l_irrad = 0.0;
    std::optional<double> l_rel;
    std::optional<double> ssim;
    double seconds = 0.0; // wall clock of the step that produced this field
};

struct ReconstructionState
{
    HeightField x;
    Grid grad;
    Irradiance e_sim;
    Irradiance e_target;
    int iteration = 0;
    std::vector<IterationRecord> history;
};

struct Networks
{
    const nn::Network* denoiser = nullptr;
    const nn::Network* updater = nullptr;
};

// Renders x at scene.n_l, optionally denoises, and fills e_sim and, when
// with_gradient, grad (zeros otherwise). Returns l_irrad of the render.
double observe(ReconstructionState& state, const SceneParams& scene, const nn::Network* denoiser, std::uint64_t seed,
               bool with_gradient = true);

// One learned update x <- max(0, x - U(x, grad, E_sim, E_target)), using
// the observation already stored in the state.
void nsfc_step(ReconstructionState& state, const nn::Network& updater, const NsfcFlags& flags);

struct ReconstructOptions
{
    Method method = Method::nsfc;
    int iters = 3;
    std::uint64_t seed = 0;
    NsfcFlags flags;
    ClassicalConfig classical;
    bool classical_denoise = false; // the classical baseline renders raw by default
    const HeightField* truth = nullptr;
    bool keep_trajectory = false;
};

struct ReconstructionResult
{
    HeightField final_field;
    std::vector<IterationRecord> history; // iters + 1 entries, init first
    std::vector<HeightField> fields;      // filled when keep_trajectory
    std::vector<Irradiance> caustics;     // simulated caustic of each field
};

// Starts from a flat field of the scene's base thickness.
[[nodiscard]] ReconstructionResult reconstruct(const Irradiance& target, const SceneParams& scene,
                                               const ReconstructOptions& options, const Networks& nets = {});

// Timings are left out so that the file is reproducible.
[[nodiscard]] std::string history_csv(const std::vector<IterationRecord>& history);

struct MethodSpec
{
    std::string name;
    Method method = Method::nsfc;
    NsfcFlags flags;
    Networks nets;
    ClassicalConfig classical;
};

struct EvaluationRow
{
    std::string sample;    // sample id or "avg"
    std::string method;
    std::string iteration; // number or "min"
    double ssim = 0.0;
    double l_rel = 0.0;
};

struct EvaluationReport
{
    std::vector<EvaluationRow> rows;

    [[nodiscard]] std::string to_csv() const;
    // Minimum l_rel over iterations of one sample and method.
    [[nodiscard]] double min_l_rel(const std::string& sample, const std::string& method) const;
    [[nodiscard]] double l_rel_at(const std::string& sample, const std::string& method, int iteration) const;
};

// Reconstructs every sample with every method for `iters` steps. Rows hold
// each recorded iteration, then a "min" row per sample and method (lowest
// l_rel, highest SSIM over iterations); "avg"
// rows average the sample rows per method and iteration. Samples share the
// render seeds across methods.
[[nodiscard]] EvaluationReport evaluate(const TestSet& test, const std::vector<MethodSpec>& methods, int iters,
                                        std::int64_t n_l, std::uint64_t seed);

struct ClassicalGrid
{
    std::vector<double> alpha;
    std::vector<double> threshold{0.0, 0.1, 0.3};
    std::vector<double> volume_weight{0.0, 0.5};
};

// Default step sizes scale with the first gradient so that the largest
// step spans 0.02 to 2 mm.
[[nodiscard]] ClassicalGrid default_classical_grid(const Irradiance& target, const SceneParams& scene,
                                                   std::uint64_t seed);

// Grid search minimising the min-over-iterations l_rel on one sample.
[[nodiscard]] ClassicalConfig tune_classical(const TestSample& sample, const SceneParams& scene, int iters,
                                             std::uint64_t seed, const ClassicalGrid& grid);

} // namespace nsfc
