#include "nsfc/nn/training.hpp"

#include "nsfc/error.hpp"
#include "nsfc/nn/adam.hpp"
#include "nsfc/parallel.hpp"
#include "nsfc/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nsfc::nn {

namespace {

double example_loss(const Tensor& prediction, const Tensor& target)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = prediction.data[i] - target.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(target.size());
}

void shuffle(std::vector<std::size_t>& v, Rng& rng)
{
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace

double mean_loss(const Network& net, const std::vector<Example>& examples, const std::vector<std::size_t>& subset)
{
    if (subset.empty()) return 0.0;
    std::vector<double> losses(subset.size());
    parallel_for(subset.size(), [&](std::size_t k) {
        const Example& ex = examples[subset[k]];
        losses[k] = example_loss(net.forward(ex.input), ex.target);
    });
    double sum = 0.0;
    for (double l : losses) sum += l;
    return sum / static_cast<double>(subset.size());
}

TrainReport train_regression(Network& net, const std::vector<Example>& examples, const TrainOptions& options)
{
    require(!examples.empty(), "training set is empty");
    require(options.batch_size >= 1 && options.max_epochs >= 0 && options.patience >= 1, "invalid training options");
    for (const Example& ex : examples)
        require(ex.input.n == 1 && ex.target.n == 1 && ex.input.c == net.in_channels() &&
                    ex.target.c == net.out_channels() && ex.target.h == ex.input.h && ex.target.w == ex.input.w,
                "training example shape does not match the network");

    Rng rng(mix_seed(options.seed, 0x7472));

    // Group-wise 90/10 split.
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < examples.size(); ++i) groups[examples[i].group].push_back(i);
    std::vector<int> group_ids;
    for (const auto& [id, members] : groups) group_ids.push_back(id);
    for (std::size_t i = group_ids.size(); i > 1; --i)
        std::swap(group_ids[i - 1], group_ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)))]);
    std::size_t n_val = static_cast<std::size_t>(std::ceil(options.validation_fraction * group_ids.size()));
    if (group_ids.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, group_ids.size() - 1);
    else n_val = 0;

    std::vector<std::size_t> train, val;
    for (std::size_t g = 0; g < group_ids.size(); ++g) {
        auto& dst = g < n_val ? val : train;
        for (std::size_t idx : groups[group_ids[g]]) dst.push_back(idx);
    }
    std::sort(train.begin(), train.end());
    std::sort(val.begin(), val.end());
    // With a single group there is nothing to hold out; validate on train.
    const std::vector<std::size_t>& val_set = val.empty() ? train : val;

    TrainReport report;
    report.train_size = train.size();
    report.validation_size = val.size();
    report.initial_validation_loss = mean_loss(net, examples, val_set);
    report.best_validation_loss = report.initial_validation_loss;
    ParamList best = net.parameters();

    const double lr = options.learning_rate.value_or(net.config().learning_rate);
    const double clip = options.clip_norm.value_or(0.0);
    require(clip >= 0.0, "clip norm must be non-negative");
    AdamState adam = AdamState::for_params(net.parameters());
    int since_best = 0;

    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
        shuffle(train, rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < train.size(); start += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t count = std::min<std::size_t>(options.batch_size, train.size() - start);
            std::vector<ParamList> per_example(count);
            std::vector<double> losses(count);
            parallel_for(count, [&](std::size_t k) {
                const Example& ex = examples[train[start + k]];
                Network::Trace trace;
                const Tensor pred = net.forward(ex.input, trace);
                losses[k] = example_loss(pred, ex.target);
                Tensor dy(pred.n, pred.c, pred.h, pred.w);
                const double scale = 2.0 / (static_cast<double>(ex.target.size()) * static_cast<double>(count));
                for (std::size_t i = 0; i < dy.size(); ++i) dy.data[i] = scale * (pred.data[i] - ex.target.data[i]);
                per_example[k] = net.backward(trace, dy);
            });

            ParamList grads = net.zero_gradients();
            for (std::size_t k = 0; k < count; ++k) {
                epoch_loss += losses[k];
                for (std::size_t t = 0; t < grads.size(); ++t)
                    for (std::size_t i = 0; i < grads[t].size(); ++i) grads[t][i] += per_example[k][t][i];
            }
            if (clip > 0.0) {
                double sq = 0.0;
                for (const auto& g : grads)
                    for (double v : g) sq += v * v;
                const double norm = std::sqrt(sq);
                if (norm > clip) {
                    const double scale = clip / norm;
                    for (auto& g : grads)
                        for (double& v : g) v *= scale;
                    ++report.clipped_steps;
                }
            }
            adam_step(net.parameters(), grads, adam, lr);
        }
        for (const auto& p : net.parameters())
            for (double v : p)
                if (!std::isfinite(v)) throw Error(ErrorKind::numeric, "training diverged (non-finite weights)");

        const double val_loss = mean_loss(net, examples, val_set);
        report.train_loss.push_back(epoch_loss / static_cast<double>(train.size()));
        report.validation_loss.push_back(val_loss);
        if (options.on_epoch) options.on_epoch(epoch, report.train_loss.back(), val_loss);

        if (val_loss < report.best_validation_loss) {
            report.best_validation_loss = val_loss;
            report.best_epoch = epoch;
            best = net.parameters();
            since_best = 0;
        } else if (++since_best >= options.patience) {
            break;
        }
    }
    net.parameters() = best;
    return report;
}

} // namespace nsfc::nn
