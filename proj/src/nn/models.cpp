#include "nsfc/nn/models.hpp"

#include "nsfc/error.hpp"
#include "nsfc/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace nsfc::nn {

namespace {

constexpr char kCheckpointMagic[8] = {'N', 'S', 'F', 'C', 'N', 'E', 'T', '1'};

void copy_pooled(const Grid& src, int channel, int factor, Tensor& dst, int dst_channel)
{
    const double scale = 1.0 / (factor * factor);
    for (int r = 0; r < dst.h; ++r)
        for (int c = 0; c < dst.w; ++c) {
            double sum = 0.0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) sum += src.at(channel, r * factor + dy, c * factor + dx);
            dst.at(0, dst_channel, r, c) = std::log1p(std::max(0.0, sum * scale));
        }
}

nlohmann::json config_to_json(const NetworkConfig& c)
{
    return {{"learning_rate", c.learning_rate}, {"c_init", c.c_init}, {"nonlin", to_string(c.nonlin)},
            {"k_down", c.k_down},               {"k_up", c.k_up},     {"m_s", c.m_s},
            {"n_s", c.n_s},                     {"m_dec", c.m_dec},   {"k_dec", c.k_dec}};
}

NetworkConfig config_from_json(const nlohmann::json& j)
{
    NetworkConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.c_init = j.at("c_init").get<int>();
    c.nonlin = parse_nonlin(j.at("nonlin").get<std::string>());
    c.k_down = j.at("k_down").get<int>();
    c.k_up = j.at("k_up").get<int>();
    c.m_s = j.at("m_s").get<int>();
    c.n_s = j.at("n_s").get<int>();
    c.m_dec = j.at("m_dec").get<int>();
    c.k_dec = j.at("k_dec").get<int>();
    return c;
}

} // namespace

Irradiance denoise(const Network& net, const Irradiance& e)
{
    require(net.role() == Role::denoiser && net.in_channels() == 1, "denoise: network is not a denoiser");
    const Grid& v = e.values;
    Tensor x(v.channels, 1, v.rows, v.cols);
    for (std::size_t i = 0; i < v.size(); ++i) x.data[i] = std::log1p(std::max(0.0, v.values[i]));
    const Tensor y = net.forward(x);

    // expm1(x + r) written as E + (1 + E) expm1(r) so that a zero residual
    // returns E bit for bit.
    Irradiance out = e;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double base = std::max(0.0, v.values[i]);
        const double residual = y.data[i] - x.data[i];
        const double value = std::max(0.0, base + (1.0 + base) * std::expm1(residual));
        if (!std::isfinite(value)) throw Error(ErrorKind::numeric, "denoiser produced a non-finite value");
        out.values.values[i] = value;
    }
    return out;
}

Tensor updater_input(const Grid& x, const Grid& grad, const Grid& e_sim, const Grid& e_target)
{
    require(x.channels == 1 && grad.same_shape(x), "updater_input: height/gradient shape mismatch");
    require(e_sim.same_shape(e_target), "updater_input: caustic shape mismatch");
    const int n = x.rows;
    require(e_sim.rows % n == 0 && e_sim.cols % n == 0 && e_sim.rows / n == e_sim.cols / n,
            "updater_input: caustic resolution is not a multiple of the height-field resolution");
    const int factor = e_sim.rows / n;
    const int n_w = e_sim.channels;

    Tensor t(1, 2 + 2 * n_w, n, n);
    double sq = 0.0;
    for (double g : grad.values) sq += g * g;
    const double rms = std::sqrt(sq / static_cast<double>(grad.size()));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            t.at(0, 0, r, c) = x.at(0, r, c) / kUpdaterHeightScale;
            t.at(0, 1, r, c) = rms > 0.0 ? grad.at(0, r, c) / rms : 0.0;
        }
    for (int ch = 0; ch < n_w; ++ch) {
        copy_pooled(e_sim, ch, factor, t, 2 + ch);
        copy_pooled(e_target, ch, factor, t, 2 + n_w + ch);
    }
    return t;
}

Grid updater_forward(const Network& net, const HeightField& x, const Grid& grad, const Irradiance& e_sim,
                     const Irradiance& e_target)
{
    require(net.role() == Role::updater, "updater_forward: network is not an updater");
    const Tensor input = updater_input(x.heights(), grad, e_sim.values, e_target.values);
    require(input.c == net.in_channels(), "updater_forward: wavelength count does not match the network");
    const Tensor y = net.forward(input);
    Grid delta(1, x.size(), x.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        delta.values[i] = y.data[i] * kUpdaterHeightScale;
        if (!std::isfinite(delta.values[i])) throw Error(ErrorKind::numeric, "updater produced a non-finite step");
    }
    return delta;
}

void save_network(const std::filesystem::path& path, const Network& net, const CheckpointMeta& meta)
{
    nlohmann::json header;
    header["format"] = "nsfc-network";
    header["version"] = 1;
    header["role"] = to_string(net.role());
    header["in_channels"] = net.in_channels();
    header["config"] = config_to_json(net.config());
    header["seed"] = meta.seed;
    header["epoch"] = meta.epoch;
    header["height_scale"] = kUpdaterHeightScale;
    const auto names = net.parameter_names();
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < names.size(); ++i)
        params.push_back({{"name", names[i]}, {"size", net.parameters()[i].size()}});
    header["params"] = params;
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot open for writing: " + path.string());
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const auto len = static_cast<std::uint32_t>(text.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : net.parameters()) {
        Grid frame(1, 1, static_cast<int>(p.size()));
        frame.values = p;
        write_nsfc(out, frame);
    }
    if (!out) throw Error(ErrorKind::io, "write failed: " + path.string());
}

Network load_network(const std::filesystem::path& path, CheckpointMeta* meta)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open network checkpoint: " + path.string());
    char magic[sizeof kCheckpointMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw Error(ErrorKind::io, "not a network checkpoint: " + path.string());
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string text(len, '\0');
    in.read(text.data(), len);
    if (!in) throw Error(ErrorKind::io, "truncated checkpoint header: " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, "bad checkpoint header in " + path.string() + ": " + e.what());
    }
    const Role role = parse_role(header.at("role").get<std::string>());
    Network net(config_from_json(header.at("config")), role, header.at("in_channels").get<int>(), 0);
    auto& params = net.parameters();
    if (header.at("params").size() != params.size())
        throw Error(ErrorKind::io, "checkpoint parameter count does not match its architecture");
    for (auto& p : params) {
        Grid frame;
        try {
            frame = read_nsfc(in);
        } catch (const Error& e) {
            throw Error(ErrorKind::io, std::string(e.what()) + " in " + path.string());
        }
        if (frame.size() != p.size()) throw Error(ErrorKind::io, "checkpoint tensor size mismatch: " + path.string());
        p = frame.values;
    }
    if (meta) {
        meta->seed = header.value("seed", std::uint64_t{0});
        meta->epoch = header.value("epoch", 0);
    }
    return net;
}

} // namespace nsfc::nn
