// nsfc: dataset generation, training, rendering, reconstruction and
// evaluation for caustic-based height-field estimation.

#include "nsfc/datasets.hpp"
#include "nsfc/error.hpp"
#include "nsfc/io.hpp"
#include "nsfc/metrics.hpp"
#include "nsfc/nn/models.hpp"
#include "nsfc/nn/trainers.hpp"
#include "nsfc/parallel.hpp"
#include "nsfc/reconstruct.hpp"
#include "nsfc/toy2d.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nsfc;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

// ---- shared flags -------------------------------------------------------------

struct Common
{
    std::uint64_t seed = 0;
    bool deterministic = false;
    int threads = 0;
};

void add_common(CLI::App* sub, Common& c)
{
    sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    sub->add_flag("--deterministic", c.deterministic,
                  "Fixed reduction order: outputs are bit-identical for any thread count");
    sub->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
}

void apply_common(const Common& c)
{
    Execution e;
    e.threads = c.threads > 0 ? c.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    e.deterministic = c.deterministic;
    set_execution(e);
}

struct SceneFlags
{
    bool full_scale = false;
    std::optional<int> field_res;
    std::optional<int> sensor_res;
    std::optional<std::int64_t> samples;
    std::optional<double> smoothing;
    std::optional<double> emission_angle;
    std::optional<double> base_thickness;
    std::optional<double> extent;
    std::optional<double> screen_z;
    std::vector<double> wavelengths;
    std::string scene_from;
};

void add_scene(CLI::App* sub, SceneFlags& f, bool with_samples)
{
    sub->add_flag("--full-scale", f.full_scale, "Start from the full-scale scene (n=128, m=512, n_l=1e6)");
    sub->add_option("--field-res", f.field_res, "Height-field resolution n")->check(CLI::Range(2, 4096));
    sub->add_option("--sensor-res", f.sensor_res, "Sensor resolution m")->check(CLI::Range(1, 16384));
    if (with_samples)
        sub->add_option("--samples", f.samples, "Light paths per render (n_l)")->check(CLI::PositiveNumber);
    sub->add_option("--smoothing", f.smoothing, "Footprint scale s (16 = one-pixel sigma)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--emission-angle", f.emission_angle, "Light cone half-angle in radians");
    sub->add_option("--base-thickness", f.base_thickness, "Substrate thickness d in meters");
    sub->add_option("--extent", f.extent, "Substrate and sensor side length in meters");
    sub->add_option("--screen-z", f.screen_z, "Screen plane height in meters");
    sub->add_option("--wavelengths", f.wavelengths, "Wavelengths in nm")->delimiter(',');
    sub->add_option("--scene-from", f.scene_from, "Take the scene from a dataset directory's manifest.json");
}

SceneParams resolve_scene(const SceneFlags& f)
{
    SceneParams s = f.full_scale ? SceneParams::full_scale() : SceneParams::desk();
    if (!f.scene_from.empty()) {
        const fs::path manifest = fs::path(f.scene_from) / "manifest.json";
        if (!fs::exists(manifest)) throw Error(ErrorKind::io, "no manifest.json in " + f.scene_from);
        s = scene_from_json(json::parse(read_text_file(manifest)).at("scene"));
    }
    if (f.field_res) s.field_res = *f.field_res;
    if (f.sensor_res) s.sensor_res = *f.sensor_res;
    if (f.samples) s.n_l = *f.samples;
    if (f.smoothing) s.smoothing = *f.smoothing;
    if (f.emission_angle) s.emission_angle = *f.emission_angle;
    if (f.base_thickness) s.base_thickness = *f.base_thickness;
    if (f.extent) s.substrate_extent = {*f.extent, *f.extent};
    if (f.screen_z) s.screen_pos.z() = *f.screen_z;
    if (!f.wavelengths.empty()) {
        s.wavelengths = f.wavelengths;
        s.radiosity.assign(f.wavelengths.size(), 1.0);
    }
    s.validate();
    return s;
}

struct RangeFlags
{
    std::optional<int> min_lines;
    std::optional<int> max_lines;
};

void add_ranges(CLI::App* sub, RangeFlags& r)
{
    sub->add_option("--min-lines", r.min_lines, "Fewest lines per field")->check(CLI::PositiveNumber);
    sub->add_option("--max-lines", r.max_lines, "Most lines per field")->check(CLI::PositiveNumber);
}

LineFieldRanges resolve_ranges(const RangeFlags& r)
{
    LineFieldRanges ranges;
    if (r.min_lines) ranges.n_lines.lo = *r.min_lines;
    if (r.max_lines) ranges.n_lines.hi = *r.max_lines;
    ranges.validate();
    return ranges;
}

struct NetFlags
{
    std::string preset = "desk";
    std::optional<double> lr;
    std::optional<int> c_init;
    std::optional<std::string> nonlin;
    std::optional<int> k_down;
    std::optional<int> k_up;
    std::optional<int> m_s;
    std::optional<int> n_s;
    std::optional<int> m_dec;
    std::optional<int> k_dec;
    int epochs = 30;
    int batch_size = 8;
    int patience = 3;
    double val_fraction = 0.1;
    std::optional<double> clip_norm;
};

void add_net(CLI::App* sub, NetFlags& f, bool updater)
{
    sub->add_option("--preset", f.preset, "Architecture preset")
        ->check(CLI::IsMember({"best", "desk"}))
        ->capture_default_str();
    sub->add_option("--lr", f.lr, "Learning rate (default from the preset)")->check(CLI::PositiveNumber);
    if (!updater) sub->add_option("--c-init", f.c_init, "Channels after the first convolution");
    sub->add_option("--nonlin", f.nonlin, "Nonlinearity")->check(CLI::IsMember({"elu", "relu", "prelu", "selu"}));
    sub->add_option("--k-down", f.k_down, "Encoder kernel size");
    sub->add_option("--k-up", f.k_up, "Decoder kernel size");
    sub->add_option("--m-s", f.m_s, "Channel multiplier per stage");
    sub->add_option("--n-s", f.n_s, "Number of down/up stages");
    if (updater) {
        sub->add_option("--m-dec", f.m_dec, "Channel divisor of the output blocks");
        sub->add_option("--k-dec", f.k_dec, "Kernel size of the output blocks");
    }
    sub->add_option("--epochs", f.epochs, "Maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--batch-size", f.batch_size, "Examples per Adam step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--patience", f.patience, "Early-stopping patience in epochs")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--val-fraction", f.val_fraction, "Held-out fraction")
        ->check(CLI::Range(0.0, 0.9))
        ->capture_default_str();
    sub->add_option("--clip-norm", f.clip_norm,
                    updater ? "Global gradient-norm clip, 0 disables (default 10)" : "Global gradient-norm clip (default off)")
        ->check(CLI::NonNegativeNumber);
}

nn::NetworkConfig resolve_net(const NetFlags& f, bool updater)
{
    nn::NetworkConfig c = updater ? (f.preset == "best" ? nn::NetworkConfig::best_updater()
                                                        : nn::NetworkConfig::desk_updater())
                                  : (f.preset == "best" ? nn::NetworkConfig::best_denoiser()
                                                        : nn::NetworkConfig::desk_denoiser());
    if (f.lr) c.learning_rate = *f.lr;
    if (f.c_init) c.c_init = *f.c_init;
    if (f.nonlin) c.nonlin = nn::parse_nonlin(*f.nonlin);
    if (f.k_down) c.k_down = *f.k_down;
    if (f.k_up) c.k_up = *f.k_up;
    if (f.m_s) c.m_s = *f.m_s;
    if (f.n_s) c.n_s = *f.n_s;
    if (f.m_dec) c.m_dec = *f.m_dec;
    if (f.k_dec) c.k_dec = *f.k_dec;
    c.validate();
    return c;
}

nn::TrainOptions train_options(const NetFlags& f, std::uint64_t seed, std::ostringstream& log)
{
    nn::TrainOptions o;
    o.max_epochs = f.epochs;
    o.batch_size = f.batch_size;
    o.patience = f.patience;
    o.validation_fraction = f.val_fraction;
    o.clip_norm = f.clip_norm;
    o.seed = seed;
    log << "epoch,train_loss,validation_loss\n";
    o.on_epoch = [&log](int epoch, double train, double val) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g\n", epoch, train, val);
        log << buf;
        std::printf("epoch %d  train %.6g  validation %.6g\n", epoch, train, val);
        std::fflush(stdout);
    };
    return o;
}

// ---- manifests ----------------------------------------------------------------

json option_values(const CLI::App* sub)
{
    json out = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "threads") continue;
        const auto& res = opt->results();
        if (!res.empty()) {
            out[name] = res.size() == 1 ? json(res.front()) : json(res);
        } else if (!opt->get_default_str().empty()) {
            out[name] = opt->get_default_str();
        } else {
            out[name] = nullptr;
        }
    }
    return out;
}

void write_run_manifest(const fs::path& path, const CLI::App* sub, const json& extra = json::object())
{
    json m;
    m["subcommand"] = sub->get_name();
    m["code_version"] = kCodeVersion;
    m["options"] = option_values(sub);
    m["deterministic"] = execution().deterministic;
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write_text_file(path, m.dump(2) + "\n");
}

fs::path sidecar(const fs::path& file) { return fs::path(file.string() + ".run.json"); }

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PngOptions caustic_png() { return PngOptions{-1.0, 2.2, false}; }
PngOptions height_png() { return PngOptions{0.0, 1.0, true}; }

std::optional<nn::Network> load_optional(const std::string& path)
{
    if (path.empty()) return std::nullopt;
    return nn::load_network(path);
}

HeightField load_field_file(const fs::path& path, const SceneParams& scene)
{
    HeightField f(load_nsfc(path), scene.substrate_extent, scene.base_thickness);
    if (f.size() != scene.field_res)
        throw Error(ErrorKind::invalid_argument, "field " + path.string() + " is " + std::to_string(f.size()) +
                                                     "x" + std::to_string(f.size()) + ", scene expects " +
                                                     std::to_string(scene.field_res));
    f.validate();
    return f;
}

std::string file_ext(const fs::path& p)
{
    std::string e = p.extension().string();
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

} // namespace

int main(int argc, char** argv)
{
    configure_allocator();
    CLI::App app{"Height-field estimation from caustics: data generation, training, rendering, reconstruction", "nsfc"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI/TOML file with one [subcommand] section each; flags take precedence");
    app.set_version_flag("--version", kCodeVersion);

    // gen-denoise
    Common c_gd;
    SceneFlags s_gd;
    RangeFlags r_gd;
    std::size_t gd_count = 0;
    std::string gd_out;
    QualityPresets gd_presets;
    auto* gen_denoise = app.add_subcommand("gen-denoise", "Generate (low, high) sample-count caustic pairs");
    gen_denoise->add_option("--count", gd_count, "Number of pairs")->required()->check(CLI::PositiveNumber);
    gen_denoise->add_option("--out", gd_out, "Output directory")->required();
    gen_denoise->add_option("--low", gd_presets.low, "Light paths of the noisy render")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    gen_denoise->add_option("--high", gd_presets.high, "Light paths of the reference render")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_ranges(gen_denoise, r_gd);
    add_scene(gen_denoise, s_gd, false);
    add_common(gen_denoise, c_gd);

    // gen-updater
    Common c_gu;
    SceneFlags s_gu;
    RangeFlags r_gu;
    std::size_t gu_count = 0;
    std::string gu_out;
    std::string gu_denoiser;
    bool gu_no_denoiser = false;
    QualityPresets gu_presets;
    auto* gen_updater = app.add_subcommand("gen-updater", "Generate (source, target, gradient, caustics) samples");
    gen_updater->add_option("--count", gu_count, "Number of samples")->required()->check(CLI::PositiveNumber);
    gen_updater->add_option("--out", gu_out, "Output directory")->required();
    auto* gu_den_opt = gen_updater->add_option("--denoiser", gu_denoiser, "Denoiser weights applied to the caustics");
    gen_updater->add_flag("--no-denoiser", gu_no_denoiser, "Store raw caustics (ablation data)")
        ->excludes(gu_den_opt);
    gen_updater->add_option("--low", gu_presets.low, "Light paths per render")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_ranges(gen_updater, r_gu);
    add_scene(gen_updater, s_gu, false);
    add_common(gen_updater, c_gu);

    // gen-test
    Common c_gt;
    SceneFlags s_gt;
    std::string gt_out;
    QualityPresets gt_presets;
    auto* gen_test = app.add_subcommand("gen-test", "Generate the 10-sample test set");
    gen_test->add_option("--out", gt_out, "Output directory")->required();
    gen_test->add_option("--high", gt_presets.high, "Light paths of the target renders")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    add_scene(gen_test, s_gt, false);
    add_common(gen_test, c_gt);

    // train-denoiser / train-updater
    Common c_td;
    NetFlags n_td;
    std::string td_data, td_out;
    auto* train_den = app.add_subcommand("train-denoiser", "Train the caustic denoiser");
    train_den->add_option("--data", td_data, "gen-denoise output directory")->required();
    train_den->add_option("--out", td_out, "Weights file")->required();
    add_net(train_den, n_td, false);
    add_common(train_den, c_td);

    Common c_tu;
    NetFlags n_tu;
    std::string tu_data, tu_out;
    auto* train_upd = app.add_subcommand("train-updater", "Train the learned update rule");
    train_upd->add_option("--data", tu_data, "gen-updater output directory")->required();
    train_upd->add_option("--out", tu_out, "Weights file")->required();
    add_net(train_upd, n_tu, true);
    add_common(train_upd, c_tu);

    // render
    Common c_r;
    SceneFlags s_r;
    std::string r_field, r_image, r_out, r_png, r_denoiser;
    bool r_flat = false;
    double r_height_scale = kDefaultGrayscaleHeight;
    auto* render_cmd = app.add_subcommand("render", "Render the caustic of a height field");
    auto* r_field_opt = render_cmd->add_option("--field", r_field, "Height field (NSFC1, meters)");
    auto* r_image_opt = render_cmd->add_option("--image", r_image, "Grayscale PNG used as a height map");
    auto* r_flat_opt = render_cmd->add_flag("--flat", r_flat, "Render the flat substrate");
    r_field_opt->excludes(r_image_opt)->excludes(r_flat_opt);
    r_image_opt->excludes(r_flat_opt);
    render_cmd->add_option("--height-scale", r_height_scale, "Meters per unit gray level for --image")
        ->capture_default_str();
    render_cmd->add_option("--denoiser", r_denoiser, "Denoise the result with these weights");
    render_cmd->add_option("--out", r_out, "Irradiance output (NSFC1)")->required();
    render_cmd->add_option("--png", r_png, "Also write a tonemapped PNG");
    add_scene(render_cmd, s_r, true);
    add_common(render_cmd, c_r);

    // reconstruct
    Common c_rc;
    SceneFlags s_rc;
    std::string rc_target, rc_method = "nsfc", rc_denoiser, rc_updater, rc_truth, rc_out;
    int rc_iters = 3;
    NsfcFlags rc_flags;
    ClassicalConfig rc_classical;
    auto* recon = app.add_subcommand("reconstruct", "Recover a height field from a target caustic");
    recon->add_option("--target", rc_target, "Target irradiance (NSFC1)")->required();
    recon->add_option("--method", rc_method, "Update rule")
        ->check(CLI::IsMember({"nsfc", "classical"}))
        ->capture_default_str();
    recon->add_option("--iters", rc_iters, "Iterations")->check(CLI::NonNegativeNumber)->capture_default_str();
    recon->add_option("--denoiser", rc_denoiser, "Denoiser weights");
    recon->add_option("--updater", rc_updater, "Updater weights");
    recon->add_flag("--no-denoiser", rc_flags.no_denoiser, "Skip the denoiser");
    recon->add_flag("--no-gradient", rc_flags.no_gradient, "Feed zeros instead of the rendering gradient");
    recon->add_option("--truth", rc_truth, "Ground-truth field for l_rel / SSIM");
    recon->add_option("--alpha", rc_classical.alpha, "Classical step size")->capture_default_str();
    recon->add_option("--threshold", rc_classical.threshold, "Classical relative threshold")->capture_default_str();
    recon->add_option("--volume-weight", rc_classical.volume_weight, "Classical volume pull")
        ->capture_default_str();
    recon->add_option("--max-height", rc_classical.max_height, "Classical height cap (m)")->capture_default_str();
    recon->add_option("--out", rc_out, "Output directory")->required();
    add_scene(recon, s_rc, true);
    add_common(recon, c_rc);

    // evaluate
    Common c_ev;
    std::string ev_test, ev_denoiser, ev_updater, ev_updater_noden, ev_out;
    std::vector<std::string> ev_methods;
    int ev_iters = 8;
    std::int64_t ev_samples = QualityPresets{}.low;
    auto* eval = app.add_subcommand("evaluate", "Score reconstructions over a test set");
    eval->add_option("--test", ev_test, "gen-test output directory")->required();
    eval->add_option("--denoiser", ev_denoiser, "Denoiser weights");
    eval->add_option("--updater", ev_updater, "Updater weights (trained on denoised data)");
    eval->add_option("--updater-noden", ev_updater_noden, "Updater weights trained without the denoiser");
    eval->add_option("--methods", ev_methods, "Subset of nsfc,nsfc-noden,nsfc-nograd,classical")
        ->delimiter(',')
        ->check(CLI::IsMember({"nsfc", "nsfc-noden", "nsfc-nograd", "classical"}));
    eval->add_option("--iters", ev_iters, "Iterations per reconstruction")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    eval->add_option("--samples", ev_samples, "Light paths per render")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    eval->add_option("--out", ev_out, "CSV report")->required();
    add_common(eval, c_ev);

    // toy2d
    Common c_toy;
    std::string toy_out;
    int toy_steps = toy2d::kDemoSteps;
    toy2d::HausdorffOptions toy_opt;
    auto* toy = app.add_subcommand("toy2d", "2D Hausdorff-fitting demonstration of shape ambiguity");
    toy->add_option("--steps", toy_steps, "Adam steps")->check(CLI::PositiveNumber)->capture_default_str();
    toy->add_option("--rays", toy_opt.n_rays, "Rays")->check(CLI::PositiveNumber)->capture_default_str();
    toy->add_option("--screen-depth", toy_opt.screen_depth, "Screen distance below the slab (m)")
        ->capture_default_str();
    toy->add_option("--lr", toy_opt.lr, "Initial Adam step (m)")->capture_default_str();
    toy->add_option("--out", toy_out, "Output directory")->required();
    add_common(toy, c_toy);

    // convert
    Common c_cv;
    std::string cv_in, cv_out;
    PngOptions cv_png = caustic_png();
    auto* convert = app.add_subcommand("convert", "Convert NSFC1 to PNG/CSV, or PNG to NSFC1");
    convert->add_option("input", cv_in, "Input file (.nsfc or .png)")->required();
    convert->add_option("output", cv_out, "Output file (.png, .csv or .nsfc)")->required();
    convert->add_option("--exposure", cv_png.exposure, "PNG exposure in stops")->capture_default_str();
    convert->add_option("--gamma", cv_png.gamma, "PNG gamma")->check(CLI::PositiveNumber)->capture_default_str();
    convert->add_flag("--normalize", cv_png.normalize, "Scale by the maximum before tonemapping");
    add_common(convert, c_cv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        for (char& ch : msg)
            if (ch == '\n') ch = ' ';
        std::cerr << "error: usage: " << msg << "\n";
        return kExitUsage;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (*gen_denoise) {
            apply_common(c_gd);
            const SceneParams scene = resolve_scene(s_gd);
            gen_denoise_dataset(gd_count, scene, resolve_ranges(r_gd), gd_presets, c_gd.seed, gd_out);
            write_run_manifest(fs::path(gd_out) / "run.json", gen_denoise, {{"scene", scene_to_json(scene)}});
            std::printf("wrote %zu pairs to %s in %.2f s\n", gd_count, gd_out.c_str(), seconds_since(t0));
        } else if (*gen_updater) {
            apply_common(c_gu);
            if (gu_denoiser.empty() && !gu_no_denoiser)
                throw Error(ErrorKind::invalid_argument, "gen-updater needs --denoiser or --no-denoiser");
            const SceneParams scene = resolve_scene(s_gu);
            const auto den = load_optional(gu_denoiser);
            gen_updater_dataset(gu_count, scene, resolve_ranges(r_gu), gu_presets, den ? &*den : nullptr, c_gu.seed,
                                gu_out, gu_denoiser);
            write_run_manifest(fs::path(gu_out) / "run.json", gen_updater, {{"scene", scene_to_json(scene)}});
            std::printf("wrote %zu samples to %s in %.2f s\n", gu_count, gu_out.c_str(), seconds_since(t0));
        } else if (*gen_test) {
            apply_common(c_gt);
            const SceneParams scene = resolve_scene(s_gt);
            gen_test_set(scene, gt_presets, c_gt.seed, gt_out);
            write_run_manifest(fs::path(gt_out) / "run.json", gen_test, {{"scene", scene_to_json(scene)}});
            std::printf("wrote test set to %s in %.2f s\n", gt_out.c_str(), seconds_since(t0));
        } else if (*train_den || *train_upd) {
            const bool updater = static_cast<bool>(*train_upd);
            const Common& c = updater ? c_tu : c_td;
            const NetFlags& nf = updater ? n_tu : n_td;
            const std::string& out = updater ? tu_out : td_out;
            apply_common(c);
            const nn::NetworkConfig cfg = resolve_net(nf, updater);
            std::ostringstream log;
            const nn::TrainOptions opts = train_options(nf, c.seed, log);
            nn::TrainedNetwork trained = [&] {
                if (updater) return nn::train_updater(load_updater_dataset(tu_data).samples, cfg, opts);
                return nn::train_denoiser(load_denoise_dataset(td_data).pairs, cfg, opts);
            }();
            nn::save_network(out, trained.net, {c.seed, trained.report.best_epoch});
            write_text_file(out + ".train.csv", log.str());
            write_run_manifest(sidecar(out), updater ? train_upd : train_den,
                               {{"best_epoch", trained.report.best_epoch},
                                {"best_validation_loss", trained.report.best_validation_loss},
                                {"initial_validation_loss", trained.report.initial_validation_loss},
                                {"parameters", trained.net.parameter_count()}});
            std::printf("best epoch %d, validation loss %.6g (initial %.6g), %.1f s\n", trained.report.best_epoch,
                        trained.report.best_validation_loss, trained.report.initial_validation_loss,
                        seconds_since(t0));
        } else if (*render_cmd) {
            apply_common(c_r);
            const SceneParams scene = resolve_scene(s_r);
            HeightField field;
            if (!r_field.empty()) {
                field = load_field_file(r_field, scene);
            } else if (!r_image.empty()) {
                field = from_grayscale(load_png_gray(r_image), scene.field_res, scene.substrate_extent,
                                       scene.base_thickness, r_height_scale);
            } else if (r_flat) {
                field = HeightField::flat(scene.field_res, scene.substrate_extent, scene.base_thickness);
            } else {
                throw Error(ErrorKind::invalid_argument, "render needs --field, --image or --flat");
            }
            RenderStats stats;
            Irradiance e = render(field, scene, c_r.seed, &stats);
            if (!r_denoiser.empty()) e = nn::denoise(nn::load_network(r_denoiser), e);
            save_nsfc(r_out, e.values);
            if (!r_png.empty()) save_png(r_png, e.values, caustic_png());
            write_run_manifest(sidecar(r_out), render_cmd, {{"scene", scene_to_json(scene)}});
            for (int ch = 0; ch < scene.n_w(); ++ch)
                std::printf("channel %d (%.0f nm): emitted %.6g W, deposited %.6g W, off-screen %.6g W, TIR %.6g W\n",
                            ch, scene.wavelengths[ch], stats.emitted[ch], stats.deposited[ch], stats.offscreen[ch],
                            stats.tir[ch]);
            std::printf("render took %.3f s\n", seconds_since(t0));
        } else if (*recon) {
            apply_common(c_rc);
            SceneParams scene = resolve_scene(s_rc);
            const Grid target_grid = load_nsfc(rc_target);
            if (!s_rc.sensor_res && s_rc.scene_from.empty()) scene.sensor_res = target_grid.rows;
            scene.validate();
            const Irradiance target = Irradiance::from_grid(target_grid, scene);
            const auto den = load_optional(rc_denoiser);
            const auto upd = load_optional(rc_updater);
            std::optional<HeightField> truth;
            if (!rc_truth.empty()) truth = load_field_file(rc_truth, scene);

            ReconstructOptions opt;
            opt.method = parse_method(rc_method);
            opt.iters = rc_iters;
            opt.seed = c_rc.seed;
            opt.flags = rc_flags;
            opt.classical = rc_classical;
            opt.truth = truth ? &*truth : nullptr;
            opt.keep_trajectory = true;
            const ReconstructionResult res =
                reconstruct(target, scene, opt, Networks{den ? &*den : nullptr, upd ? &*upd : nullptr});

            const fs::path out(rc_out);
            fs::create_directories(out);
            for (std::size_t i = 0; i < res.fields.size(); ++i) {
                char stem[32];
                std::snprintf(stem, sizeof stem, "%02zu", i);
                save_nsfc(out / ("height_" + std::string(stem) + ".nsfc"), res.fields[i].heights());
                save_png(out / ("height_" + std::string(stem) + ".png"), res.fields[i].heights(), height_png());
                save_nsfc(out / ("caustic_" + std::string(stem) + ".nsfc"), res.caustics[i].values);
                save_png(out / ("caustic_" + std::string(stem) + ".png"), res.caustics[i].values, caustic_png());
            }
            save_nsfc(out / "final.nsfc", res.final_field.heights());
            write_text_file(out / "history.csv", history_csv(res.history));
            write_run_manifest(out / "run.json", recon, {{"scene", scene_to_json(scene)}});
            for (const IterationRecord& r : res.history) {
                std::printf("iter %d  l_irrad %.6g", r.iteration, r.l_irrad);
                if (r.l_rel) std::printf("  l_rel %.4f  ssim %.4f", *r.l_rel, *r.ssim);
                std::printf("  (%.2f s)\n", r.seconds);
            }
        } else if (*eval) {
            apply_common(c_ev);
            const TestSet test = load_test_set(ev_test);
            const auto den = load_optional(ev_denoiser);
            const auto upd = load_optional(ev_updater);
            const auto upd_noden = load_optional(ev_updater_noden);
            std::vector<std::string> names = ev_methods;
            if (names.empty()) {
                if (den && upd) names.insert(names.end(), {"nsfc", "nsfc-nograd"});
                if (upd_noden) names.push_back("nsfc-noden");
                names.push_back("classical");
            }
            const SceneParams scene = with_samples(test.scene, ev_samples);
            std::vector<MethodSpec> methods;
            json tuned = json::object();
            for (const std::string& name : names) {
                MethodSpec m;
                m.name = name;
                if (name == "classical") {
                    m.method = Method::classical;
                    const std::uint64_t tune_seed = mix_seed(c_ev.seed, 0);
                    const ClassicalGrid grid = default_classical_grid(test.samples.front().target, scene, tune_seed);
                    m.classical = tune_classical(test.samples.front(), scene, ev_iters, tune_seed, grid);
                    tuned = {{"alpha", m.classical.alpha},
                             {"threshold", m.classical.threshold},
                             {"volume_weight", m.classical.volume_weight}};
                } else if (name == "nsfc-noden") {
                    if (!upd_noden) throw Error(ErrorKind::invalid_argument, "nsfc-noden needs --updater-noden");
                    m.flags.no_denoiser = true;
                    m.nets.updater = &*upd_noden;
                } else {
                    if (!den || !upd) throw Error(ErrorKind::invalid_argument, name + " needs --denoiser and --updater");
                    m.nets = {&*den, &*upd};
                    m.flags.no_gradient = name == "nsfc-nograd";
                }
                methods.push_back(m);
            }
            const EvaluationReport report = evaluate(test, methods, ev_iters, ev_samples, c_ev.seed);
            write_text_file(ev_out, report.to_csv());
            write_run_manifest(sidecar(ev_out), eval, {{"methods", names}, {"classical_tuned", tuned}});
            for (const EvaluationRow& r : report.rows)
                if (r.sample == "avg" && r.iteration == "min")
                    std::printf("%-12s avg min l_rel %.4f  ssim %.4f\n", r.method.c_str(), r.l_rel, r.ssim);
            std::printf("evaluation took %.1f s\n", seconds_since(t0));
        } else if (*toy) {
            apply_common(c_toy);
            const toy2d::DemoResult d = toy2d::run_demo(toy_steps, toy_opt);
            const fs::path out(toy_out);
            fs::create_directories(out);
            save_png(out / "panels.png", toy2d::draw_panels(d, toy_opt.n_rays, toy_opt.screen_depth),
                     PngOptions{0.0, 1.0, false});
            std::ostringstream hist;
            hist << "step,hausdorff,surrogate\n";
            for (std::size_t i = 0; i < d.run.loss.size(); ++i) {
                char buf[96];
                if (i < d.run.surrogate.size())
                    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", i, d.run.loss[i], d.run.surrogate[i]);
                else
                    std::snprintf(buf, sizeof buf, "%zu,%.10g,\n", i, d.run.loss[i]);
                hist << buf;
            }
            write_text_file(out / "history.csv", hist.str());
            std::ostringstream prof;
            prof << "x,truth,init,final\n";
            for (int j = 0; j < d.truth.size(); ++j) {
                char buf[128];
                std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g\n", d.truth.node_x(j), d.truth.heights[j],
                              d.init.heights[j], d.run.profile.heights[j]);
                prof << buf;
            }
            write_text_file(out / "profiles.csv", prof.str());
            const json summary = {{"initial_hausdorff", d.initial_hausdorff},
                                  {"final_hausdorff", d.final_hausdorff},
                                  {"initial_l_rel", d.initial_l_rel},
                                  {"final_l_rel", d.final_l_rel}};
            write_run_manifest(out / "run.json", toy, {{"result", summary}});
            std::printf("Hausdorff %.4g -> %.4g (%.1f%% reduction); l_rel %.3f -> %.3f\n", d.initial_hausdorff,
                        d.final_hausdorff, 100.0 * (1.0 - d.final_hausdorff / d.initial_hausdorff),
                        d.initial_l_rel, d.final_l_rel);
        } else if (*convert) {
            apply_common(c_cv);
            const std::string in_ext = file_ext(cv_in);
            const std::string out_ext = file_ext(cv_out);
            if (in_ext == ".png" && out_ext == ".nsfc") {
                save_nsfc(cv_out, load_png_gray(cv_in));
            } else if (in_ext == ".nsfc" && out_ext == ".png") {
                save_png(cv_out, load_nsfc(cv_in), cv_png);
            } else if (in_ext == ".nsfc" && out_ext == ".csv") {
                save_csv(cv_out, load_nsfc(cv_in));
            } else {
                throw Error(ErrorKind::invalid_argument,
                            "convert supports .nsfc -> .png/.csv and .png -> .nsfc, got " + in_ext + " -> " + out_ext);
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << (e.kind() == ErrorKind::io ? "io" : e.kind() == ErrorKind::numeric ? "numeric" : "usage")
                  << ": " << e.what() << "\n";
        return e.kind() == ErrorKind::io ? kExitIo : e.kind() == ErrorKind::numeric ? kExitNumeric : kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: io: " << e.what() << "\n";
        return kExitIo;
    } catch (const json::exception& e) {
        std::cerr << "error: io: malformed JSON: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
