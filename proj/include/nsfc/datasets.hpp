#pragma once

#include "nsfc/heightfield.hpp"
#include "nsfc/nn/network.hpp"
#include "nsfc/render.hpp"
#include "nsfc/samples.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nsfc {

inline constexpr const char* kCodeVersion = "nsfc-1.0.0";

// Light-path counts of the noisy and the reference renderings.
struct QualityPresets
{
    std::int64_t low = 10000;
    std::int64_t high = 160000;

    // 1e6 / 1.6e7 light paths.
    [[nodiscard]] static QualityPresets full_scale() { return {1000000, 16000000}; }
    [[nodiscard]] static QualityPresets desk() { return {}; }
};

[[nodiscard]] nlohmann::json scene_to_json(const SceneParams& scene);
[[nodiscard]] SceneParams scene_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json ranges_to_json(const LineFieldRanges& ranges);
[[nodiscard]] LineFieldRanges ranges_from_json(const nlohmann::json& j);

[[nodiscard]] SceneParams with_samples(SceneParams scene, std::int64_t n_l);

// Rounds heights through f32 so that a stored field reproduces exactly what
// was rendered.
[[nodiscard]] HeightField quantized(HeightField field);

// ---- denoising dataset ----------------------------------------------------

[[nodiscard]] DenoisePair make_denoise_pair(std::size_t index, const SceneParams& scene,
                                            const LineFieldRanges& ranges, const QualityPresets& presets,
                                            std::uint64_t seed);

// Writes manifest.json and sample_%06d/{field,low,high}.nsfc under out.
void gen_denoise_dataset(std::size_t count, const SceneParams& scene, const LineFieldRanges& ranges,
                         const QualityPresets& presets, std::uint64_t seed, const std::filesystem::path& out);

struct DenoiseDataset
{
    SceneParams scene;
    std::vector<DenoisePair> pairs;
};

[[nodiscard]] DenoiseDataset load_denoise_dataset(const std::filesystem::path& dir);

// ---- updater dataset ------------------------------------------------------

// Without a denoiser the raw low-sample caustics are stored (ablation data).
[[nodiscard]] UpdaterSample make_updater_sample(std::size_t index, const SceneParams& scene,
                                                const LineFieldRanges& ranges, const QualityPresets& presets,
                                                const nn::Network* denoiser, std::uint64_t seed);

// Writes manifest.json and sample_%06d/{source,target,grad,e_source,e_target}.nsfc.
void gen_updater_dataset(std::size_t count, const SceneParams& scene, const LineFieldRanges& ranges,
                         const QualityPresets& presets, const nn::Network* denoiser, std::uint64_t seed,
                         const std::filesystem::path& out, const std::string& denoiser_label = {});

struct UpdaterDataset
{
    SceneParams scene;
    bool denoised = true;
    std::vector<UpdaterSample> samples;
};

[[nodiscard]] UpdaterDataset load_updater_dataset(const std::filesystem::path& dir);

// Render seed used for the source caustic of updater sample `index`.
[[nodiscard]] std::uint64_t updater_render_seed(std::uint64_t seed, std::size_t index);

// ---- test set ---------------------------------------------------------------

enum class TestKind { hand_picked, random_lines, grayscale };
[[nodiscard]] std::string to_string(TestKind kind);

struct TestSample
{
    std::string id;
    TestKind kind = TestKind::random_lines;
    HeightField field;
    Irradiance target;
    int n_lines = 0; // 0 for grayscale samples
};

struct TestSet
{
    SceneParams scene;
    std::vector<TestSample> samples;
};

inline constexpr int kTestRandomMinLines = 5;
inline constexpr int kTestRandomMaxLines = 30;

// Fixed line layout of the first test sample.
[[nodiscard]] std::vector<LineSpec> hand_picked_lines();

// Procedural [0, 1] images standing in for photographs: 0 rings, 1 blobs,
// 2 woven stripes.
[[nodiscard]] Grid procedural_pattern(int kind, int resolution);

// 1 hand-picked + 6 random (5..30 lines) + 3 grayscale fields; targets are
// rendered at the high preset.
[[nodiscard]] TestSet make_test_set(const SceneParams& scene, const QualityPresets& presets, std::uint64_t seed);
void gen_test_set(const SceneParams& scene, const QualityPresets& presets, std::uint64_t seed,
                  const std::filesystem::path& out);
[[nodiscard]] TestSet load_test_set(const std::filesystem::path& dir);

} // namespace nsfc
