#pragma once

#include "nsfc/nn/network.hpp"
#include "nsfc/nn/training.hpp"
#include "nsfc/samples.hpp"

#include <vector>

namespace nsfc::nn {

struct TrainedNetwork
{
    Network net;
    TrainReport report;
};

// One example per (pair, channel): log1p(low) -> log1p(high).
[[nodiscard]] std::vector<Example> denoiser_examples(const std::vector<DenoisePair>& pairs);

// Input as fed by updater_forward; target (source - target) / height scale,
// i.e. the step that lands exactly on the target.
[[nodiscard]] std::vector<Example> updater_examples(const std::vector<UpdaterSample>& samples);

[[nodiscard]] TrainedNetwork train_denoiser(const std::vector<DenoisePair>& pairs, const NetworkConfig& config,
                                            const TrainOptions& options);

// Default gradient-norm clip for the updater. Its batch gradients are heavy
// tailed (median norm about 5, largest above 200), and unclipped spikes can
// derail a run after one epoch.
inline constexpr double kUpdaterClipNorm = 10.0;

[[nodiscard]] TrainedNetwork train_updater(const std::vector<UpdaterSample>& samples, const NetworkConfig& config,
                                           const TrainOptions& options);

} // namespace nsfc::nn
