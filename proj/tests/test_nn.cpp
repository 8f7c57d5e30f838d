#include "gradcheck.hpp"

#include "nsfc/error.hpp"
#include "nsfc/nn/adam.hpp"
#include "nsfc/nn/models.hpp"
#include "nsfc/render.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace nsfc;
using namespace nsfc::nn;

namespace {

// Direct summation with explicit zero padding.
Tensor naive_conv(const Tensor& x, const std::vector<double>& w, const std::vector<double>& b, const ConvGeom& g)
{
    const int oh = g.out_size(x.h), ow = g.out_size(x.w);
    Tensor y(x.n, g.out_channels, oh, ow);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < g.out_channels; ++o)
            for (int r = 0; r < oh; ++r)
                for (int c = 0; c < ow; ++c) {
                    double acc = b[o];
                    for (int i = 0; i < g.in_channels; ++i)
                        for (int ky = 0; ky < g.kernel; ++ky)
                            for (int kx = 0; kx < g.kernel; ++kx) {
                                const int yy = r * g.stride + ky - g.pad.lo;
                                const int xx = c * g.stride + kx - g.pad.lo;
                                if (yy < 0 || yy >= x.h || xx < 0 || xx >= x.w) continue;
                                acc += w[((o * g.in_channels + i) * g.kernel + ky) * g.kernel + kx] *
                                       x.at(n, i, yy, xx);
                            }
                    y.at(n, o, r, c) = acc;
                }
    return y;
}

std::size_t conv_params(int in, int out, int k) { return static_cast<std::size_t>(in) * out * k * k + out; }

// Parameter count read off the block list: head, encoder, decoder, tail.
std::size_t denoiser_param_count(const NetworkConfig& c)
{
    const std::size_t prelu = c.nonlin == Nonlin::prelu ? 1 : 0;
    std::size_t total = conv_params(1, c.c_init, kDenoiserEdgeKernel) + prelu;
    std::vector<int> w{c.c_init};
    for (int s = 1; s <= c.n_s; ++s) {
        w.push_back(w.back() * c.m_s);
        total += conv_params(w[s - 1], w[s], c.k_down) + prelu;
    }
    for (int s = c.n_s; s >= 1; --s) {
        total += conv_params(w[s], w[s - 1], c.k_up) + prelu;
        total += conv_params(2 * w[s - 1], w[s - 1], c.k_up) + prelu;
    }
    return total + conv_params(c.c_init, 1, kDenoiserEdgeKernel);
}

} // namespace

TEST_CASE("conv2d")
{
    Rng rng(1);
    SUBCASE("1x1 unit kernel is the identity")
    {
        const Tensor x = gradcheck::random_tensor(rng, 2, 1, 5, 5);
        const ConvGeom g{1, 1, 1, 1, Padding::same(1)};
        CHECK(conv2d(x, std::vector<double>{1.0}, std::vector<double>{0.0}, g) == x);
    }
    SUBCASE("zero kernel gives the bias")
    {
        const Tensor x = gradcheck::random_tensor(rng, 1, 2, 4, 4);
        const ConvGeom g{2, 3, 3, 1, Padding::same(3)};
        const Tensor y = conv2d(x, std::vector<double>(g.weight_count(), 0.0), std::vector<double>{0.5, -1.0, 2.0}, g);
        for (int o = 0; o < 3; ++o)
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) CHECK(y.at(0, o, r, c) == std::vector<double>{0.5, -1.0, 2.0}[o]);
    }
    SUBCASE("random cases match direct summation")
    {
        for (const ConvGeom& g : {ConvGeom{3, 2, 3, 1, Padding::same(3)}, ConvGeom{2, 4, 4, 2, Padding::halving(4)},
                                  ConvGeom{2, 2, 2, 1, Padding::same(2)}, ConvGeom{1, 3, 5, 2, Padding::halving(5)}}) {
            const Tensor x = gradcheck::random_tensor(rng, 2, g.in_channels, 8, 8);
            std::vector<double> w(g.weight_count()), b(static_cast<std::size_t>(g.out_channels));
            for (double& v : w) v = rng.uniform(-1.0, 1.0);
            for (double& v : b) v = rng.uniform(-1.0, 1.0);
            const Tensor y = conv2d(x, w, b, g), ref = naive_conv(x, w, b, g);
            REQUIRE(y.same_shape(ref));
            for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y.data[i] - ref.data[i]) <= 1e-10);
        }
    }
    SUBCASE("channel mismatch is rejected")
    {
        const ConvGeom g{2, 1, 3, 1, Padding::same(3)};
        CHECK_THROWS_AS((void)conv2d(Tensor(1, 3, 4, 4), std::vector<double>(g.weight_count()), std::vector<double>(1), g),
                        Error);
    }
}

TEST_CASE("conv2d_backward")
{
    Rng rng(2);
    const ConvGeom g{1, 2, 3, 1, Padding::same(3)};
    Tensor x = gradcheck::random_tensor(rng, 1, 1, 4, 4);
    std::vector<double> w(g.weight_count()), b(2);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);

    SUBCASE("zero upstream gradient")
    {
        const ConvGrads z = conv2d_backward(x, w, g, Tensor(1, 2, 4, 4));
        for (double v : z.dx.data) CHECK(v == 0.0);
        for (double v : z.dw) CHECK(v == 0.0);
        for (double v : z.db) CHECK(v == 0.0);
    }
    SUBCASE("bias gradient is the spatial sum")
    {
        const Tensor dy = gradcheck::random_tensor(rng, 1, 2, 4, 4);
        const ConvGrads grads = conv2d_backward(x, w, g, dy);
        for (int o = 0; o < 2; ++o) {
            double s = 0.0;
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) s += dy.at(0, o, r, c);
            CHECK(grads.db[o] == doctest::Approx(s).epsilon(1e-14));
        }
    }
    SUBCASE("matches finite differences on a 1x4x4 input with a 3x3 kernel")
    {
        const Tensor r = gradcheck::random_tensor(rng, 1, 2, 4, 4);
        const auto loss = [&] { return gradcheck::dot(conv2d(x, w, b, g), r); };
        const ConvGrads grads = conv2d_backward(x, w, g, r);
        const auto fdx = gradcheck::fd(x.data, loss);
        const auto fdw = gradcheck::fd(w, loss);
        for (std::size_t i = 0; i < fdx.size(); ++i) CHECK(grads.dx.data[i] == doctest::Approx(fdx[i]).epsilon(1e-5));
        for (std::size_t i = 0; i < fdw.size(); ++i) CHECK(grads.dw[i] == doctest::Approx(fdw[i]).epsilon(1e-5));
    }
}

TEST_CASE("nonlinearities")
{
    Tensor x(1, 1, 1, 3);
    x.data = {-1.0, 0.0, 2.0};
    CHECK(nonlin_forward(Nonlin::relu, x).data == std::vector<double>{0.0, 0.0, 2.0});
    const Tensor e = nonlin_forward(Nonlin::elu, x);
    CHECK(e.data[1] == 0.0);
    CHECK(e.data[0] == doctest::Approx(std::expm1(-1.0)));
    Tensor near(1, 1, 1, 2);
    near.data = {-1e-9, 1e-9};
    const Tensor en = nonlin_forward(Nonlin::elu, near);
    CHECK(std::abs(en.data[0] - en.data[1]) < 3e-9);
    CHECK(nonlin_forward(Nonlin::prelu, x, 0.1).data[0] == doctest::Approx(-0.1));

    SUBCASE("PReLU slope gradient on a negative input is the input")
    {
        Tensor neg(1, 1, 1, 1);
        neg.data = {-0.7};
        Tensor dy(1, 1, 1, 1, 1.0);
        CHECK(nonlin_backward(Nonlin::prelu, neg, dy, 0.25).dslope == -0.7);
    }
    SUBCASE("unknown names are rejected") { CHECK_THROWS_AS((void)parse_nonlin("tanh"), Error); }
    SUBCASE("names round trip")
    {
        for (Nonlin k : {Nonlin::elu, Nonlin::relu, Nonlin::prelu, Nonlin::selu}) CHECK(parse_nonlin(to_string(k)) == k);
    }
}

TEST_CASE("every layer's backward matches finite differences")
{
    for (int i = 0; i < 27; ++i) {
        const gradcheck::Result r = gradcheck::property_case(7, i);
        INFO(r.layer);
        CHECK(r.rel_error <= 1e-4);
    }
}

TEST_CASE("network shapes and parameters")
{
    NetworkConfig cfg = NetworkConfig::desk_denoiser();
    cfg.c_init = 4;
    cfg.n_s = 2;
    const Network den = Network::denoiser(cfg, 1);
    CHECK(den.parameter_count() == denoiser_param_count(cfg));
    CHECK(Network::denoiser(NetworkConfig::best_denoiser(), 1).parameter_count() ==
          denoiser_param_count(NetworkConfig::best_denoiser()));

    Rng rng(3);
    const Tensor x = gradcheck::random_tensor(rng, 2, 1, 8, 8);
    const Tensor y = den.forward(x);
    CHECK(y.n == 2);
    CHECK(y.c == 1);
    CHECK(y.h == 8);
    CHECK(y.w == 8);
    CHECK_THROWS_AS((void)den.forward(gradcheck::random_tensor(rng, 1, 1, 6, 6)), Error);

    const Network upd = Network::updater(NetworkConfig::desk_updater(), 3, 2);
    CHECK(upd.in_channels() == 8);
    const Tensor u = upd.forward(gradcheck::random_tensor(rng, 1, 8, 16, 16));
    CHECK(u.c == 1);
    CHECK(u.h == 16);

    SUBCASE("all-zero weights give a zero output")
    {
        Network z = Network::updater(NetworkConfig::desk_updater(), 3, 4);
        for (auto& p : z.parameters())
            for (double& v : p) v = 0.0;
        for (double v : z.forward(gradcheck::random_tensor(rng, 1, 8, 16, 16)).data) CHECK(v == 0.0);
    }
    SUBCASE("batch processing equals item-wise processing")
    {
        Network n2 = den;
        for (auto& p : n2.parameters())
            for (double& v : p)
                if (v == 0.0) v = 0.1;
        const Tensor batch = n2.forward(x);
        for (int i = 0; i < 2; ++i) {
            Tensor one(1, 1, 8, 8);
            std::copy(x.image(i), x.image(i) + 64, one.data.begin());
            const Tensor single = n2.forward(one);
            for (int k = 0; k < 64; ++k) CHECK(single.data[k] == batch.image(i)[k]);
        }
    }
}

TEST_CASE("denoise")
{
    SceneParams s;
    s.field_res = 8;
    s.sensor_res = 16;
    s.n_l = 2000;
    const Irradiance e = render(HeightField::flat(8, s.substrate_extent, s.base_thickness), s, 1);
    NetworkConfig cfg = NetworkConfig::desk_denoiser();
    cfg.n_s = 2;
    SUBCASE("a fresh network is the exact identity")
    {
        const Network net = Network::denoiser(cfg, 5);
        CHECK(denoise(net, e).values == e.values);
    }
    SUBCASE("output keeps the shape and stays non-negative")
    {
        Network net = Network::denoiser(cfg, 5);
        Rng rng(1);
        for (auto& p : net.parameters())
            for (double& v : p) v += rng.uniform(-0.5, 0.5);
        const Irradiance d = denoise(net, e);
        CHECK(d.values.same_shape(e.values));
        for (double v : d.values.values) CHECK((std::isfinite(v) && v >= 0.0));
    }
    SUBCASE("the backward pass treats the denoiser as the identity")
    {
        Grid g(3, 4, 4);
        for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = static_cast<double>(i) - 7.5;
        CHECK(denoise_backward_identity(g) == g);
    }
}

TEST_CASE("updater_forward")
{
    SceneParams s;
    s.field_res = 16;
    s.sensor_res = 32;
    s.n_l = 2000;
    const HeightField x = HeightField::flat(16, s.substrate_extent, s.base_thickness);
    const Irradiance e = render(x, s, 1);
    const Network net = Network::updater(NetworkConfig::desk_updater(), 3, 9);
    const Grid delta = updater_forward(net, x, Grid(1, 16, 16, 0.1), e, e);
    CHECK(delta.channels == 1);
    CHECK(delta.rows == 16);
    for (double v : delta.values) CHECK(v == 0.0);

    SceneParams odd = s;
    odd.sensor_res = 24;
    CHECK_THROWS_AS((void)updater_forward(net, x, Grid(1, 16, 16), render(x, odd, 1), render(x, odd, 1)), Error);
}

TEST_CASE("Adam")
{
    SUBCASE("zero gradients leave the parameters and count the step")
    {
        ParamList p{{1.0, -2.0}, {0.5}};
        const ParamList before = p;
        AdamState st;
        adam_step(p, ParamList{{0.0, 0.0}, {0.0}}, st, 0.1);
        CHECK(p == before);
        CHECK(st.step == 1);
    }
    SUBCASE("scalar hand trace over two steps")
    {
        ParamList p{{1.0}};
        AdamState st;
        const double lr = 0.1;
        adam_step(p, ParamList{{0.5}}, st, lr);
        // m = 0.05, v = 2.5e-4, m_hat = 0.5, v_hat = 0.25
        const double p1 = 1.0 - lr * 0.5 / (0.5 + 1e-8);
        CHECK(p[0][0] == doctest::Approx(p1).epsilon(1e-15));
        adam_step(p, ParamList{{-0.2}}, st, lr);
        const double m = 0.9 * 0.05 + 0.1 * -0.2;
        const double v = 0.999 * 2.5e-4 + 0.001 * 0.04;
        const double m_hat = m / (1 - 0.81), v_hat = v / (1 - 0.998001);
        CHECK(p[0][0] == doctest::Approx(p1 - lr * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-14));
    }
    SUBCASE("deterministic")
    {
        ParamList a{{0.3, 0.4}}, b{{0.3, 0.4}};
        AdamState sa, sb;
        for (int i = 0; i < 5; ++i) {
            adam_step(a, ParamList{{0.1 * i, -0.2}}, sa, 0.01);
            adam_step(b, ParamList{{0.1 * i, -0.2}}, sb, 0.01);
        }
        CHECK(a == b);
    }
    SUBCASE("shape mismatch")
    {
        ParamList p{{1.0}};
        AdamState st;
        CHECK_THROWS_AS(adam_step(p, ParamList{{1.0, 2.0}}, st, 0.1), Error);
    }
}

TEST_CASE("checkpoints round trip")
{
    const auto dir = std::filesystem::temp_directory_path() / "nsfc_test_nn";
    std::filesystem::create_directories(dir);
    Network net = Network::updater(NetworkConfig::desk_updater(), 3, 12);
    net.parameters()[0][0] = 0.123456789;
    save_network(dir / "u.bin", net, {12, 4});
    CheckpointMeta meta;
    const Network back = load_network(dir / "u.bin", &meta);
    // Weights are stored as f32.
    ParamList expected = net.parameters();
    for (auto& t : expected)
        for (double& v : t) v = static_cast<double>(static_cast<float>(v));
    CHECK(back.parameters() == expected);
    CHECK(back.config() == net.config());
    CHECK(back.role() == Role::updater);
    CHECK(meta.seed == 12);
    CHECK(meta.epoch == 4);
    CHECK_THROWS_AS((void)load_network(dir / "missing.bin"), Error);
}
