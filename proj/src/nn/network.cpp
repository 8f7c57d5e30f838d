#include "nsfc/nn/network.hpp"

#include "nsfc/error.hpp"
#include "nsfc/rng.hpp"

#include <algorithm>
#include <cmath>

namespace nsfc::nn {

void NetworkConfig::validate() const
{
    require(learning_rate > 0.0, "learning rate must be positive");
    require(c_init >= 1 && c_init <= 32, "c_init must be in [1, 32]");
    require(k_down >= 2 && k_down <= 11, "k_down must be in [2, 11]");
    require(k_up >= 2 && k_up <= 11, "k_up must be in [2, 11]");
    require(m_s >= 1 && m_s <= 8, "m_s must be in [1, 8]");
    require(n_s >= 1 && n_s <= 4, "n_s must be in [1, 4]");
    require(m_dec >= 2 && m_dec <= 11, "m_dec must be in [2, 11]");
    require(k_dec == 2 || k_dec == 4 || k_dec == 8 || k_dec == 16, "k_dec must be one of 2, 4, 8, 16");
}

NetworkConfig NetworkConfig::best_denoiser()
{
    NetworkConfig c;
    c.learning_rate = 0.00151;
    c.c_init = 31;
    c.nonlin = Nonlin::prelu;
    c.k_down = 5;
    c.k_up = 2;
    c.m_s = 2;
    c.n_s = 4;
    return c;
}

NetworkConfig NetworkConfig::best_updater()
{
    NetworkConfig c;
    c.learning_rate = 0.005155;
    c.nonlin = Nonlin::prelu;
    c.k_down = 9;
    c.k_up = 9;
    c.m_s = 8;
    c.n_s = 1;
    c.m_dec = 8;
    c.k_dec = 4;
    return c;
}

NetworkConfig NetworkConfig::desk_denoiser()
{
    NetworkConfig c = best_denoiser();
    c.c_init = 8;
    return c;
}

NetworkConfig NetworkConfig::desk_updater()
{
    NetworkConfig c = best_updater();
    c.m_s = 2;
    return c;
}

std::string to_string(Role role) { return role == Role::denoiser ? "denoiser" : "updater"; }

Role parse_role(const std::string& name)
{
    if (name == "denoiser") return Role::denoiser;
    if (name == "updater") return Role::updater;
    throw Error(ErrorKind::invalid_argument, "unknown network role: " + name);
}

Network::Network(const NetworkConfig& config, Role role, int in_channels, std::uint64_t seed)
    : config_(config)
    , role_(role)
    , in_channels_(in_channels)
{
    config_.validate();
    require(in_channels >= 1, "network needs at least one input channel");

    Node input;
    input.op = Op::input;
    input.channels = in_channels;
    const int x = add_node(input);

    if (role == Role::denoiser) {
        const int head = act(conv(x, config_.c_init, kDenoiserEdgeKernel, 1, Padding::same(kDenoiserEdgeKernel)));
        const int body = unet(head, config_.c_init);
        output_conv_ = conv(body, 1, kDenoiserEdgeKernel, 1, Padding::same(kDenoiserEdgeKernel));
        Node sum;
        sum.op = Op::add;
        sum.a = x;
        sum.b = output_conv_;
        sum.channels = 1;
        add_node(sum);
    } else {
        int h = unet(x, in_channels);
        int channels = in_channels;
        for (;;) {
            const int next = channels / config_.m_dec;
            if (next <= 1) {
                output_conv_ = conv(h, 1, config_.k_dec, 1, Padding::same(config_.k_dec));
                break;
            }
            h = act(conv(h, next, config_.k_dec, 1, Padding::same(config_.k_dec)));
            channels = next;
        }
    }
    initialise(seed);
}

Network Network::denoiser(const NetworkConfig& config, std::uint64_t seed)
{
    return Network(config, Role::denoiser, 1, seed);
}

Network Network::updater(const NetworkConfig& config, int n_wavelengths, std::uint64_t seed)
{
    require(n_wavelengths >= 1, "updater needs at least one wavelength");
    return Network(config, Role::updater, 2 + 2 * n_wavelengths, seed);
}

int Network::add_node(Node node)
{
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
}

int Network::conv(int input, int out_channels, int kernel, int stride, Padding pad)
{
    Node node;
    node.op = Op::conv;
    node.a = input;
    node.geom = ConvGeom{nodes_[input].channels, out_channels, kernel, stride, pad};
    node.channels = out_channels;
    const int id = static_cast<int>(nodes_.size());
    node.weight = static_cast<int>(params_.size());
    params_.emplace_back(node.geom.weight_count(), 0.0);
    names_.push_back("conv" + std::to_string(id) + ".weight");
    node.bias = static_cast<int>(params_.size());
    params_.emplace_back(static_cast<std::size_t>(out_channels), 0.0);
    names_.push_back("conv" + std::to_string(id) + ".bias");
    return add_node(node);
}

int Network::act(int input)
{
    Node node;
    node.op = Op::act;
    node.a = input;
    node.channels = nodes_[input].channels;
    if (config_.nonlin == Nonlin::prelu) {
        node.slope = static_cast<int>(params_.size());
        params_.emplace_back(1, kPreluInitialSlope);
        names_.push_back("prelu" + std::to_string(nodes_.size()) + ".slope");
    }
    return add_node(node);
}

int Network::unet(int input, int c0)
{
    std::vector<int> skips{input};
    std::vector<int> widths{c0};
    int h = input;
    for (int s = 1; s <= config_.n_s; ++s) {
        const int width = widths.back() * config_.m_s;
        h = act(conv(h, width, config_.k_down, 2, Padding::halving(config_.k_down)));
        skips.push_back(h);
        widths.push_back(width);
    }
    for (int s = config_.n_s; s >= 1; --s) {
        Node up;
        up.op = Op::upsample;
        up.a = h;
        up.channels = nodes_[h].channels;
        h = add_node(up);
        h = act(conv(h, widths[s - 1], config_.k_up, 1, Padding::same(config_.k_up)));
        Node cat;
        cat.op = Op::concat;
        cat.a = h;
        cat.b = skips[s - 1];
        cat.channels = nodes_[h].channels + nodes_[skips[s - 1]].channels;
        h = add_node(cat);
        h = act(conv(h, widths[s - 1], config_.k_up, 1, Padding::same(config_.k_up)));
    }
    return h;
}

void Network::initialise(std::uint64_t seed)
{
    Rng rng(mix_seed(seed, 0x6e6e));
    for (const Node& node : nodes_) {
        if (node.op != Op::conv) continue;
        const double fan_in = static_cast<double>(node.geom.in_channels) * node.geom.kernel * node.geom.kernel;
        const double std = std::sqrt(2.0 / fan_in);
        for (double& w : params_[node.weight]) w = rng.normal(0.0, std);
    }
    zero_output_layer();
}

void Network::zero_output_layer()
{
    const Node& out = nodes_.at(static_cast<std::size_t>(output_conv_));
    std::fill(params_[out.weight].begin(), params_[out.weight].end(), 0.0);
    std::fill(params_[out.bias].begin(), params_[out.bias].end(), 0.0);
}

std::size_t Network::parameter_count() const noexcept
{
    std::size_t total = 0;
    for (const auto& p : params_) total += p.size();
    return total;
}

ParamList Network::zero_gradients() const
{
    ParamList g;
    g.reserve(params_.size());
    for (const auto& p : params_) g.emplace_back(p.size(), 0.0);
    return g;
}

std::vector<std::string> Network::parameter_names() const { return names_; }

Tensor Network::forward(const Tensor& x) const
{
    Trace trace;
    return forward(x, trace);
}

Tensor Network::forward(const Tensor& x, Trace& trace) const
{
    require(x.c == in_channels_, "network input has " + std::to_string(x.c) + " channels, expected " +
                                     std::to_string(in_channels_));
    require(x.h % size_divisor() == 0 && x.w % size_divisor() == 0,
            "network input size must be divisible by " + std::to_string(size_divisor()));
    trace.values.assign(nodes_.size(), Tensor{});
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& node = nodes_[i];
        auto& v = trace.values;
        switch (node.op) {
        case Op::input: v[i] = x; break;
        case Op::conv: v[i] = conv2d(v[node.a], params_[node.weight], params_[node.bias], node.geom); break;
        case Op::act:
            v[i] = nonlin_forward(config_.nonlin, v[node.a], node.slope >= 0 ? params_[node.slope][0] : 0.0);
            break;
        case Op::upsample: v[i] = upsample2x(v[node.a]); break;
        case Op::concat: v[i] = concat_channels(v[node.a], v[node.b]); break;
        case Op::add:
            v[i] = v[node.a];
            for (std::size_t k = 0; k < v[i].size(); ++k) v[i].data[k] += v[node.b].data[k];
            break;
        }
    }
    return trace.values.back();
}

ParamList Network::backward(const Trace& trace, const Tensor& dy, Tensor* dx) const
{
    require(trace.values.size() == nodes_.size(), "backward: trace does not belong to this network");
    require(dy.same_shape(trace.values.back()), "backward: output gradient shape mismatch");
    ParamList grads = zero_gradients();
    std::vector<Tensor> adj(nodes_.size());
    auto accumulate = [&](int id, Tensor&& g) {
        Tensor& slot = adj[static_cast<std::size_t>(id)];
        if (slot.data.empty()) {
            slot = std::move(g);
        } else {
            for (std::size_t k = 0; k < slot.size(); ++k) slot.data[k] += g.data[k];
        }
    };
    adj.back() = dy;

    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        const Node& node = nodes_[i];
        Tensor& g = adj[i];
        if (g.data.empty()) continue;
        switch (node.op) {
        case Op::input:
            if (dx) *dx = g;
            break;
        case Op::conv: {
            const bool need_dx = nodes_[node.a].op != Op::input || dx != nullptr;
            ConvGrads cg = conv2d_backward(trace.values[node.a], params_[node.weight], node.geom, g, need_dx);
            auto& gw = grads[node.weight];
            auto& gb = grads[node.bias];
            for (std::size_t k = 0; k < gw.size(); ++k) gw[k] += cg.dw[k];
            for (std::size_t k = 0; k < gb.size(); ++k) gb[k] += cg.db[k];
            if (need_dx) accumulate(node.a, std::move(cg.dx));
            break;
        }
        case Op::act: {
            NonlinGrads ng = nonlin_backward(config_.nonlin, trace.values[node.a], g,
                                             node.slope >= 0 ? params_[node.slope][0] : 0.0);
            if (node.slope >= 0) grads[node.slope][0] += ng.dslope;
            accumulate(node.a, std::move(ng.dx));
            break;
        }
        case Op::upsample: accumulate(node.a, upsample2x_backward(g)); break;
        case Op::concat: {
            Tensor da, db;
            split_channels(g, nodes_[node.a].channels, da, db);
            accumulate(node.a, std::move(da));
            accumulate(node.b, std::move(db));
            break;
        }
        case Op::add:
            accumulate(node.a, Tensor(g));
            accumulate(node.b, Tensor(g));
            break;
        }
        if (i != 0) g = Tensor{};
    }
    return grads;
}

} // namespace nsfc::nn
