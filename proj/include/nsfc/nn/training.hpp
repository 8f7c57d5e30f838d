#pragma once

#include "nsfc/nn/network.hpp"
#include "nsfc/nn/tensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace nsfc::nn {

// One supervised pair. Examples sharing a group (e.g. the channels of one
// caustic) always land on the same side of the train/validation split.
struct Example
{
    Tensor input;
    Tensor target;
    int group = 0;
};

struct TrainOptions
{
    int max_epochs = 30;
    int batch_size = 8;
    // Stop once validation loss has not improved for this many epochs.
    int patience = 3;
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    std::optional<double> learning_rate; // defaults to the config's
    // Batch gradients with a larger global norm are rescaled to it. Unset or 0
    // disables clipping, except that train_updater defaults to kUpdaterClipNorm.
    std::optional<double> clip_norm;
    // Called after every epoch with (epoch, train loss, validation loss).
    std::function<void(int, double, double)> on_epoch;
};

struct TrainReport
{
    double initial_validation_loss = 0.0;
    std::vector<double> train_loss;
    std::vector<double> validation_loss;
    int best_epoch = 0; // 0 = initial weights
    double best_validation_loss = 0.0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
    std::size_t clipped_steps = 0;
};

// Mean over the examples of the per-entry MSE between net(input) and target.
[[nodiscard]] double mean_loss(const Network& net, const std::vector<Example>& examples,
                               const std::vector<std::size_t>& subset);

// Adam on MSE(net(input), target) with a seeded group-wise split and early
// stopping; `net` ends holding the best-on-validation weights.
TrainReport train_regression(Network& net, const std::vector<Example>& examples, const TrainOptions& options);

} // namespace nsfc::nn
