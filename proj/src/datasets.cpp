#include "nsfc/datasets.hpp"

#include "nsfc/error.hpp"
#include "nsfc/io.hpp"
#include "nsfc/metrics.hpp"
#include "nsfc/nn/models.hpp"
#include "nsfc/parallel.hpp"
#include "nsfc/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <numbers>

namespace nsfc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDenoiseDomain = 0xD3A015E;
constexpr std::uint64_t kUpdaterDomain = 0x0BDA7E;
constexpr std::uint64_t kTestDomain = 0x7E575E7;

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t domain, std::size_t index)
{
    return mix_seed(mix_seed(seed, domain), index);
}

std::string sample_dir(std::size_t index)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%06zu", index);
    return buf;
}

json range_json(Range r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json load_manifest(const fs::path& dir, const std::string& kind)
{
    const fs::path path = dir / "manifest.json";
    if (!fs::exists(path)) throw Error(ErrorKind::io, "no manifest.json in " + dir.string());
    json manifest;
    try {
        manifest = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::io, "malformed manifest " + path.string() + ": " + e.what());
    }
    if (manifest.value("kind", std::string{}) != kind)
        throw Error(ErrorKind::io, path.string() + " is not a " + kind + " dataset");
    return manifest;
}

HeightField load_field(const fs::path& path, const SceneParams& scene)
{
    return HeightField(load_nsfc(path), scene.substrate_extent, scene.base_thickness);
}

json base_manifest(const std::string& kind, std::size_t count, const SceneParams& scene, std::uint64_t seed,
                   const QualityPresets& presets)
{
    json m;
    m["kind"] = kind;
    m["code_version"] = kCodeVersion;
    m["count"] = count;
    m["seed"] = seed;
    m["scene"] = scene_to_json(scene);
    m["presets"] = {{"low", presets.low}, {"high", presets.high}};
    return m;
}

} // namespace

json scene_to_json(const SceneParams& s)
{
    return {{"field_res", s.field_res},
            {"sensor_res", s.sensor_res},
            {"n_l", s.n_l},
            {"wavelengths", s.wavelengths},
            {"smoothing", s.smoothing},
            {"emission_angle", s.emission_angle},
            {"radiosity", s.radiosity},
            {"light_pos", {s.light_pos.x(), s.light_pos.y(), s.light_pos.z()}},
            {"screen_pos", {s.screen_pos.x(), s.screen_pos.y(), s.screen_pos.z()}},
            {"substrate_extent", {s.substrate_extent.x, s.substrate_extent.y}},
            {"base_thickness", s.base_thickness},
            {"sellmeier_b", s.glass.b},
            {"sellmeier_c", s.glass.c}};
}

SceneParams scene_from_json(const json& j)
{
    SceneParams s;
    s.field_res = j.at("field_res").get<int>();
    s.sensor_res = j.at("sensor_res").get<int>();
    s.n_l = j.at("n_l").get<std::int64_t>();
    s.wavelengths = j.at("wavelengths").get<std::vector<double>>();
    s.smoothing = j.at("smoothing").get<double>();
    s.emission_angle = j.at("emission_angle").get<double>();
    s.radiosity = j.at("radiosity").get<std::vector<double>>();
    const auto lp = j.at("light_pos").get<std::vector<double>>();
    const auto sp = j.at("screen_pos").get<std::vector<double>>();
    const auto ex = j.at("substrate_extent").get<std::vector<double>>();
    require(lp.size() == 3 && sp.size() == 3 && ex.size() == 2, "scene JSON: malformed vector field");
    s.light_pos = Vec3(lp[0], lp[1], lp[2]);
    s.screen_pos = Vec3(sp[0], sp[1], sp[2]);
    s.substrate_extent = {ex[0], ex[1]};
    s.base_thickness = j.at("base_thickness").get<double>();
    s.glass.b = j.at("sellmeier_b").get<std::array<double, 3>>();
    s.glass.c = j.at("sellmeier_c").get<std::array<double, 3>>();
    s.validate();
    return s;
}

json ranges_to_json(const LineFieldRanges& r)
{
    return {{"n_lines", {r.n_lines.lo, r.n_lines.hi}},
            {"start_x", range_json(r.start_x)},
            {"start_y", range_json(r.start_y)},
            {"end_x", range_json(r.end_x)},
            {"end_y", range_json(r.end_y)},
            {"width", range_json(r.width)},
            {"height", range_json(r.height)},
            {"offset_position", range_json(r.offset_position)},
            {"offset_width", range_json(r.offset_width)},
            {"offset_height", range_json(r.offset_height)}};
}

LineFieldRanges ranges_from_json(const json& j)
{
    LineFieldRanges r;
    r.n_lines = {j.at("n_lines").at(0).get<int>(), j.at("n_lines").at(1).get<int>()};
    r.start_x = range_from(j.at("start_x"));
    r.start_y = range_from(j.at("start_y"));
    r.end_x = range_from(j.at("end_x"));
    r.end_y = range_from(j.at("end_y"));
    r.width = range_from(j.at("width"));
    r.height = range_from(j.at("height"));
    r.offset_position = range_from(j.at("offset_position"));
    r.offset_width = range_from(j.at("offset_width"));
    r.offset_height = range_from(j.at("offset_height"));
    r.validate();
    return r;
}

SceneParams with_samples(SceneParams scene, std::int64_t n_l)
{
    scene.n_l = n_l;
    return scene;
}

HeightField quantized(HeightField field)
{
    field.heights() = quantize_f32(std::move(field.heights()));
    return field;
}

// ---- denoising ----------------------------------------------------------------

DenoisePair make_denoise_pair(std::size_t index, const SceneParams& scene, const LineFieldRanges& ranges,
                              const QualityPresets& presets, std::uint64_t seed)
{
    const std::uint64_t s = sample_seed(seed, kDenoiseDomain, index);
    Rng rng(mix_seed(s, 1));
    DenoisePair pair;
    pair.field = quantized(
        sample_line_field(rng, ranges, scene.field_res, scene.substrate_extent, scene.base_thickness).field);
    pair.low = render(pair.field, with_samples(scene, presets.low), mix_seed(s, 2));
    pair.high = render(pair.field, with_samples(scene, presets.high), mix_seed(s, 3));
    return pair;
}

void gen_denoise_dataset(std::size_t count, const SceneParams& scene, const LineFieldRanges& ranges,
                         const QualityPresets& presets, std::uint64_t seed, const fs::path& out)
{
    require(count >= 1, "dataset count must be >= 1");
    require(presets.low >= 1 && presets.high >= presets.low, "quality presets must satisfy 1 <= low <= high");
    scene.validate();
    ranges.validate();
    fs::create_directories(out);
    parallel_for(count, [&](std::size_t i) {
        const DenoisePair pair = make_denoise_pair(i, scene, ranges, presets, seed);
        const fs::path dir = out / sample_dir(i);
        save_nsfc(dir / "field.nsfc", pair.field.heights());
        save_nsfc(dir / "low.nsfc", pair.low.values);
        save_nsfc(dir / "high.nsfc", pair.high.values);
    });
    json m = base_manifest("denoise", count, scene, seed, presets);
    m["ranges"] = ranges_to_json(ranges);
    write_text_file(out / "manifest.json", m.dump(2) + "\n");
}

DenoiseDataset load_denoise_dataset(const fs::path& dir)
{
    const json m = load_manifest(dir, "denoise");
    DenoiseDataset ds;
    ds.scene = scene_from_json(m.at("scene"));
    const auto count = m.at("count").get<std::size_t>();
    ds.pairs.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const fs::path d = dir / sample_dir(i);
        ds.pairs[i].field = load_field(d / "field.nsfc", ds.scene);
        ds.pairs[i].low = Irradiance::from_grid(load_nsfc(d / "low.nsfc"), ds.scene);
        ds.pairs[i].high = Irradiance::from_grid(load_nsfc(d / "high.nsfc"), ds.scene);
    }
    return ds;
}

// ---- updater ------------------------------------------------------------------

std::uint64_t updater_render_seed(std::uint64_t seed, std::size_t index)
{
    return mix_seed(sample_seed(seed, kUpdaterDomain, index), 2);
}

UpdaterSample make_updater_sample(std::size_t index, const SceneParams& scene, const LineFieldRanges& ranges,
                                  const QualityPresets& presets, const nn::Network* denoiser, std::uint64_t seed)
{
    const std::uint64_t s = sample_seed(seed, kUpdaterDomain, index);
    Rng rng(mix_seed(s, 1));
    const int n = scene.field_res;
    const LineField source = sample_line_field(rng, ranges, n, scene.substrate_extent, scene.base_thickness);
    const LineField target = perturb_line_field(source.lines, rng, ranges, n, scene.substrate_extent, scene.base_thickness);

    UpdaterSample out;
    out.source = quantized(source.field);
    out.target = quantized(target.field);
    const SceneParams low = with_samples(scene, presets.low);
    const std::uint64_t render_seed = mix_seed(s, 2);
    out.e_source = render(out.source, low, render_seed);
    out.e_target = render(out.target, low, mix_seed(s, 3));
    if (denoiser) {
        out.e_source = nn::denoise(*denoiser, out.e_source);
        out.e_target = nn::denoise(*denoiser, out.e_target);
    }
    const Grid dL_dE = nn::denoise_backward_identity(l_irrad_backward(out.e_source.values, out.e_target.values));
    out.grad = render_backward(out.source, low, render_seed, dL_dE);
    return out;
}

void gen_updater_dataset(std::size_t count, const SceneParams& scene, const LineFieldRanges& ranges,
                         const QualityPresets& presets, const nn::Network* denoiser, std::uint64_t seed,
                         const fs::path& out, const std::string& denoiser_label)
{
    require(count >= 1, "dataset count must be >= 1");
    scene.validate();
    ranges.validate();
    fs::create_directories(out);
    parallel_for(count, [&](std::size_t i) {
        const UpdaterSample s = make_updater_sample(i, scene, ranges, presets, denoiser, seed);
        const fs::path dir = out / sample_dir(i);
        save_nsfc(dir / "source.nsfc", s.source.heights());
        save_nsfc(dir / "target.nsfc", s.target.heights());
        save_nsfc(dir / "grad.nsfc", s.grad);
        save_nsfc(dir / "e_source.nsfc", s.e_source.values);
        save_nsfc(dir / "e_target.nsfc", s.e_target.values);
    });
    json m = base_manifest("updater", count, scene, seed, presets);
    m["ranges"] = ranges_to_json(ranges);
    m["denoised"] = denoiser != nullptr;
    m["denoiser"] = denoiser_label;
    write_text_file(out / "manifest.json", m.dump(2) + "\n");
}

UpdaterDataset load_updater_dataset(const fs::path& dir)
{
    const json m = load_manifest(dir, "updater");
    UpdaterDataset ds;
    ds.scene = scene_from_json(m.at("scene"));
    ds.denoised = m.value("denoised", true);
    const auto count = m.at("count").get<std::size_t>();
    ds.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const fs::path d = dir / sample_dir(i);
        UpdaterSample& s = ds.samples[i];
        s.source = load_field(d / "source.nsfc", ds.scene);
        s.target = load_field(d / "target.nsfc", ds.scene);
        s.grad = load_nsfc(d / "grad.nsfc");
        s.e_source = Irradiance::from_grid(load_nsfc(d / "e_source.nsfc"), ds.scene);
        s.e_target = Irradiance::from_grid(load_nsfc(d / "e_target.nsfc"), ds.scene);
    }
    return ds;
}

// ---- test set -----------------------------------------------------------------

std::string to_string(TestKind kind)
{
    switch (kind) {
    case TestKind::hand_picked: return "hand_picked";
    case TestKind::random_lines: return "random_lines";
    case TestKind::grayscale: return "grayscale";
    }
    return "?";
}

std::vector<LineSpec> hand_picked_lines()
{
    // A lattice of crossing filaments with one stacked pair, in meters.
    return {
        {{-0.018, -0.015}, {0.018, -0.012}, 2.0e-3, 0.8e-3},
        {{-0.017, 0.002}, {0.019, 0.004}, 1.5e-3, 1.2e-3},
        {{-0.016, 0.016}, {0.015, 0.013}, 3.0e-3, 0.6e-3},
        {{-0.010, -0.020}, {-0.008, 0.020}, 2.5e-3, 1.0e-3},
        {{0.009, -0.019}, {0.012, 0.018}, 1.2e-3, 1.5e-3},
        {{-0.015, -0.018}, {0.016, 0.017}, 1.0e-3, 0.5e-3},
        {{-0.017, 0.002}, {0.019, 0.004}, 1.5e-3, 0.4e-3},
    };
}

Grid procedural_pattern(int kind, int resolution)
{
    require(resolution >= 2, "pattern resolution must be >= 2");
    require(kind >= 0 && kind <= 2, "pattern kind must be 0, 1 or 2");
    Grid g(1, resolution, resolution);
    const double pi = std::numbers::pi;
    for (int r = 0; r < resolution; ++r) {
        for (int c = 0; c < resolution; ++c) {
            const double u = 2.0 * c / (resolution - 1) - 1.0; // [-1, 1]
            const double v = 2.0 * r / (resolution - 1) - 1.0;
            double value = 0.0;
            switch (kind) {
            case 0: { // concentric rings fading outwards
                const double rad = std::hypot(u - 0.1, v + 0.05);
                value = 0.5 * (1.0 + std::cos(4.0 * pi * rad)) * std::exp(-1.5 * rad * rad);
                break;
            }
            case 1: { // soft blobs
                const double cx[4] = {-0.45, 0.35, 0.1, -0.2};
                const double cy[4] = {0.3, 0.4, -0.45, -0.2};
                const double sg[4] = {0.22, 0.15, 0.28, 0.12};
                for (int k = 0; k < 4; ++k) {
                    const double d2 = (u - cx[k]) * (u - cx[k]) + (v - cy[k]) * (v - cy[k]);
                    value += std::exp(-d2 / (2 * sg[k] * sg[k]));
                }
                value = std::min(1.0, value);
                break;
            }
            case 2: { // woven diagonal stripes
                const double a = 0.5 * (1.0 + std::sin(3.0 * pi * (u + v)));
                const double b = 0.5 * (1.0 + std::sin(2.0 * pi * (u - 0.6 * v)));
                value = std::pow(a * b, 1.5);
                break;
            }
            }
            g.at(0, r, c) = std::clamp(value, 0.0, 1.0);
        }
    }
    return g;
}

TestSet make_test_set(const SceneParams& scene, const QualityPresets& presets, std::uint64_t seed)
{
    scene.validate();
    TestSet set;
    set.scene = scene;
    set.samples.resize(10);
    const int n = scene.field_res;
    const SceneParams high = with_samples(scene, presets.high);

    parallel_for(set.samples.size(), [&](std::size_t i) {
        const std::uint64_t s = sample_seed(seed, kTestDomain, i);
        TestSample& t = set.samples[i];
        char id[16];
        std::snprintf(id, sizeof id, "test_%02zu", i);
        t.id = id;
        if (i == 0) {
            t.kind = TestKind::hand_picked;
            const auto lines = hand_picked_lines();
            t.n_lines = static_cast<int>(lines.size());
            t.field = rasterize_lines(n, scene.substrate_extent, scene.base_thickness, lines);
        } else if (i <= 6) {
            t.kind = TestKind::random_lines;
            LineFieldRanges ranges;
            ranges.n_lines = {kTestRandomMinLines, kTestRandomMaxLines};
            Rng rng(mix_seed(s, 1));
            const LineField lf = sample_line_field(rng, ranges, n, scene.substrate_extent, scene.base_thickness);
            t.n_lines = static_cast<int>(lf.lines.size());
            t.field = lf.field;
        } else {
            t.kind = TestKind::grayscale;
            t.field = from_grayscale(procedural_pattern(static_cast<int>(i - 7), 2 * n), n, scene.substrate_extent,
                                     scene.base_thickness, kDefaultGrayscaleHeight);
        }
        t.field = quantized(t.field);
        t.target = render(t.field, high, mix_seed(s, 3));
    });
    return set;
}

void gen_test_set(const SceneParams& scene, const QualityPresets& presets, std::uint64_t seed, const fs::path& out)
{
    const TestSet set = make_test_set(scene, presets, seed);
    fs::create_directories(out);
    json m = base_manifest("test", set.samples.size(), scene, seed, presets);
    json entries = json::array();
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        const TestSample& t = set.samples[i];
        const fs::path dir = out / sample_dir(i);
        save_nsfc(dir / "field.nsfc", t.field.heights());
        save_nsfc(dir / "target.nsfc", t.target.values);
        entries.push_back({{"id", t.id}, {"kind", to_string(t.kind)}, {"n_lines", t.n_lines}});
    }
    m["samples"] = entries;
    write_text_file(out / "manifest.json", m.dump(2) + "\n");
}

TestSet load_test_set(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw Error(ErrorKind::io, "test set directory not found: " + dir.string());
    const json m = load_manifest(dir, "test");
    TestSet set;
    set.scene = scene_from_json(m.at("scene"));
    const json& entries = m.at("samples");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        TestSample t;
        t.id = entries[i].at("id").get<std::string>();
        const std::string kind = entries[i].at("kind").get<std::string>();
        t.kind = kind == "hand_picked" ? TestKind::hand_picked
                 : kind == "grayscale" ? TestKind::grayscale
                                       : TestKind::random_lines;
        t.n_lines = entries[i].value("n_lines", 0);
        const fs::path d = dir / sample_dir(i);
        t.field = load_field(d / "field.nsfc", set.scene);
        t.target = Irradiance::from_grid(load_nsfc(d / "target.nsfc"), set.scene);
        set.samples.push_back(std::move(t));
    }
    if (set.samples.empty()) throw Error(ErrorKind::io, "test set is empty: " + dir.string());
    return set;
}

} // namespace nsfc
