#pragma once

#include "nsfc/nn/layers.hpp"
#include "nsfc/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nsfc::nn {

using ParamList = std::vector<std::vector<double>>;

// Hyperparameters of the UNet family shared by the denoiser and the updater.
struct NetworkConfig
{
    double learning_rate = 0.00151;
    int c_init = 31;
    Nonlin nonlin = Nonlin::prelu;
    int k_down = 5;
    int k_up = 2;
    int m_s = 2;
    int n_s = 4;
    int m_dec = 8;
    int k_dec = 4;

    void validate() const;

    // Best-performing rows of the architecture search.
    [[nodiscard]] static NetworkConfig best_denoiser();
    [[nodiscard]] static NetworkConfig best_updater();
    // Same kernels and nonlinearity with c_init / m_s reduced for a single
    // CPU core.
    [[nodiscard]] static NetworkConfig desk_denoiser();
    [[nodiscard]] static NetworkConfig desk_updater();

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class Role { denoiser, updater };

[[nodiscard]] std::string to_string(Role role);
[[nodiscard]] Role parse_role(const std::string& name);

// Kernel of the channel-expanding head and contracting tail of the denoiser.
inline constexpr int kDenoiserEdgeKernel = 3;

// Static computation graph. Denoiser: 1 -> head conv+nonlin (c_init) ->
// UNet -> tail conv (1), added to the input. Updater: (2 + 2 n_w) -> UNet ->
// output blocks dividing channels by m_dec with kernel k_dec, the last one
// linear with one output channel.
//
// UNet(c0): n_s encoder stages (stride-2 conv k_down, channels x m_s, nonlin),
// then per stage a decoder: nearest x2 upsample, conv k_up + nonlin back to
// the stage's input width, concatenation with the skip, conv k_up + nonlin.
class Network
{
public:
    Network() = default;
    Network(const NetworkConfig& config, Role role, int in_channels, std::uint64_t seed);

    [[nodiscard]] static Network denoiser(const NetworkConfig& config, std::uint64_t seed);
    [[nodiscard]] static Network updater(const NetworkConfig& config, int n_wavelengths, std::uint64_t seed);

    struct Trace
    {
        std::vector<Tensor> values;
    };

    [[nodiscard]] Tensor forward(const Tensor& x) const;
    [[nodiscard]] Tensor forward(const Tensor& x, Trace& trace) const;

    // Parameter gradients for output gradient dy; optionally the input
    // gradient.
    [[nodiscard]] ParamList backward(const Trace& trace, const Tensor& dy, Tensor* dx = nullptr) const;

    [[nodiscard]] const NetworkConfig& config() const noexcept { return config_; }
    [[nodiscard]] Role role() const noexcept { return role_; }
    [[nodiscard]] int in_channels() const noexcept { return in_channels_; }
    [[nodiscard]] int out_channels() const noexcept { return 1; }
    [[nodiscard]] int size_divisor() const noexcept { return 1 << config_.n_s; }

    [[nodiscard]] const ParamList& parameters() const noexcept { return params_; }
    ParamList& parameters() noexcept { return params_; }
    [[nodiscard]] std::size_t parameter_count() const noexcept;
    [[nodiscard]] ParamList zero_gradients() const;

    // Zeroes the last convolution, making the denoiser the identity and the
    // updater output zero.
    void zero_output_layer();
    // Names of the parameter tensors, for checkpoints and diagnostics.
    [[nodiscard]] std::vector<std::string> parameter_names() const;

private:
    enum class Op { input, conv, act, upsample, concat, add };

    struct Node
    {
        Op op = Op::input;
        int a = -1;
        int b = -1;
        ConvGeom geom;
        int weight = -1;
        int bias = -1;
        int slope = -1;
        int channels = 0;
    };

    int add_node(Node node);
    int conv(int input, int out_channels, int kernel, int stride, Padding pad);
    int act(int input);
    int unet(int input, int c0);

    void initialise(std::uint64_t seed);

    NetworkConfig config_;
    Role role_ = Role::denoiser;
    int in_channels_ = 1;
    std::vector<Node> nodes_;
    std::vector<std::string> names_;
    ParamList params_;
    int output_conv_ = -1;
};

} // namespace nsfc::nn
