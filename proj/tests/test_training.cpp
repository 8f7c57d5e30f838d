#include "nsfc/error.hpp"
#include "nsfc/datasets.hpp"
#include "nsfc/metrics.hpp"
#include "nsfc/nn/models.hpp"
#include "nsfc/nn/trainers.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace nsfc;
using namespace nsfc::nn;

namespace {

SceneParams tiny_scene()
{
    SceneParams s;
    s.field_res = 16;
    s.sensor_res = 16;
    return s;
}

const QualityPresets kPresets{2000, 32000};

std::vector<DenoisePair> denoise_pairs(std::size_t count)
{
    std::vector<DenoisePair> pairs;
    for (std::size_t i = 0; i < count; ++i)
        pairs.push_back(make_denoise_pair(i, tiny_scene(), LineFieldRanges{}, kPresets, 17));
    return pairs;
}

NetworkConfig tiny_denoiser()
{
    NetworkConfig c = NetworkConfig::desk_denoiser();
    c.c_init = 4;
    c.n_s = 2;
    return c;
}

TrainOptions options(int epochs)
{
    TrainOptions o;
    o.max_epochs = epochs;
    o.patience = epochs;
    o.seed = 3;
    return o;
}

} // namespace

TEST_CASE("denoiser training")
{
    const auto pairs = denoise_pairs(30);
    const TrainedNetwork a = train_denoiser(pairs, tiny_denoiser(), options(4));

    SUBCASE("training loss falls over the first three epochs")
    {
        REQUIRE(a.report.train_loss.size() >= 3);
        CHECK(a.report.train_loss[1] < a.report.train_loss[0]);
        CHECK(a.report.train_loss[2] < a.report.train_loss[1]);
    }
    SUBCASE("validation beats the initial network")
    {
        CHECK(a.report.best_validation_loss < a.report.initial_validation_loss);
        CHECK(a.report.best_epoch >= 1);
    }
    SUBCASE("a 90/10 split by caustic")
    {
        CHECK(a.report.validation_size == 3 * 3);
        CHECK(a.report.train_size == 27 * 3);
    }
    SUBCASE("seeded runs reproduce")
    {
        const TrainedNetwork b = train_denoiser(pairs, tiny_denoiser(), options(4));
        CHECK(b.report.best_validation_loss == a.report.best_validation_loss);
        CHECK(b.net.parameters() == a.net.parameters());
    }
    SUBCASE("empty dataset") { CHECK_THROWS_AS((void)train_denoiser({}, tiny_denoiser(), options(1)), Error); }
}

TEST_CASE("updater training")
{
    const SceneParams s = tiny_scene();
    std::vector<UpdaterSample> samples;
    for (std::size_t i = 0; i < 30; ++i)
        samples.push_back(make_updater_sample(i, s, LineFieldRanges{}, kPresets, nullptr, 23));

    SUBCASE("one step beats the no-op baseline on validation")
    {
        // Thirty 16x16 samples are too few for the preset step size.
        TrainOptions o = options(6);
        o.learning_rate = 1e-3;
        const TrainedNetwork t = train_updater(samples, NetworkConfig::desk_updater(), o);
        // The fresh network outputs zero, so its loss is MSE(x, target).
        CHECK(t.report.best_validation_loss < t.report.initial_validation_loss);
    }
    SUBCASE("gradient clipping")
    {
        TrainOptions o = options(1);
        o.clip_norm = 1e9;
        CHECK(train_updater(samples, NetworkConfig::desk_updater(), o).report.clipped_steps == 0);
        o.clip_norm = 1e-12;
        const TrainedNetwork t = train_updater(samples, NetworkConfig::desk_updater(), o);
        // 27 training samples in batches of 8 give 4 steps, all clipped.
        CHECK(t.report.clipped_steps == 4);
        o.clip_norm = 0.0;
        CHECK(train_updater(samples, NetworkConfig::desk_updater(), o).report.clipped_steps == 0);
        o.clip_norm = -1.0;
        CHECK_THROWS_AS((void)train_updater(samples, NetworkConfig::desk_updater(), o), Error);
    }
    SUBCASE("a zero-step dataset learns a zero step")
    {
        std::vector<UpdaterSample> still = samples;
        for (UpdaterSample& u : still) {
            u.target = u.source;
            u.e_target = u.e_source;
        }
        const TrainedNetwork t = train_updater(still, NetworkConfig::desk_updater(), options(3));
        double range = 0.0, mean_abs = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < still.size(); i += 5) {
            const UpdaterSample& u = still[i];
            const Grid d = updater_forward(t.net, u.source, u.grad, u.e_source, u.e_target);
            for (double v : d.values) mean_abs += std::abs(v);
            count += d.size();
            for (double h : u.source.heights().values) range = std::max(range, h);
        }
        CHECK(mean_abs / count < 0.01 * range);
    }
}
