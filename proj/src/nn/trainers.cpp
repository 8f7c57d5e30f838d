#include "nsfc/nn/trainers.hpp"

#include "nsfc/error.hpp"
#include "nsfc/nn/models.hpp"

#include <cmath>

namespace nsfc::nn {

std::vector<Example> denoiser_examples(const std::vector<DenoisePair>& pairs)
{
    std::vector<Example> out;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        const Grid& lo = pairs[p].low.values;
        const Grid& hi = pairs[p].high.values;
        require(lo.same_shape(hi), "denoise pair: low/high shape mismatch");
        for (int ch = 0; ch < lo.channels; ++ch) {
            Example ex{Tensor(1, 1, lo.rows, lo.cols), Tensor(1, 1, lo.rows, lo.cols), static_cast<int>(p)};
            for (int r = 0; r < lo.rows; ++r)
                for (int c = 0; c < lo.cols; ++c) {
                    ex.input.at(0, 0, r, c) = std::log1p(std::max(0.0, lo.at(ch, r, c)));
                    ex.target.at(0, 0, r, c) = std::log1p(std::max(0.0, hi.at(ch, r, c)));
                }
            out.push_back(std::move(ex));
        }
    }
    return out;
}

std::vector<Example> updater_examples(const std::vector<UpdaterSample>& samples)
{
    std::vector<Example> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const UpdaterSample& s = samples[i];
        require(s.source.heights().same_shape(s.target.heights()), "updater sample: source/target shape mismatch");
        Example ex;
        ex.input = updater_input(s.source.heights(), s.grad, s.e_source.values, s.e_target.values);
        const int n = s.source.size();
        ex.target = Tensor(1, 1, n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                ex.target.at(0, 0, r, c) = (s.source.at(r, c) - s.target.at(r, c)) / kUpdaterHeightScale;
        ex.group = static_cast<int>(i);
        out.push_back(std::move(ex));
    }
    return out;
}

TrainedNetwork train_denoiser(const std::vector<DenoisePair>& pairs, const NetworkConfig& config,
                              const TrainOptions& options)
{
    require(!pairs.empty(), "denoiser dataset is empty");
    TrainedNetwork out{Network::denoiser(config, options.seed), {}};
    out.report = train_regression(out.net, denoiser_examples(pairs), options);
    return out;
}

TrainedNetwork train_updater(const std::vector<UpdaterSample>& samples, const NetworkConfig& config,
                             const TrainOptions& options)
{
    require(!samples.empty(), "updater dataset is empty");
    TrainedNetwork out{Network::updater(config, samples.front().e_source.channels(), options.seed), {}};
    TrainOptions o = options;
    if (!o.clip_norm) o.clip_norm = kUpdaterClipNorm;
    out.report = train_regression(out.net, updater_examples(samples), o);
    return out;
}

} // namespace nsfc::nn
