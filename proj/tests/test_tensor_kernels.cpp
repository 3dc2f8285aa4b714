#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "pwt/kernels.hpp"
#include "pwt/network.hpp"
#include "support/gradcheck.hpp"

using namespace pwt;

namespace {

template <typename T>
ConvLayerState<T> plain_conv(int in, int out, int k, int stride = 1) {
    Rng rng(7);
    return make_conv_layer<T>(in, out, k, stride, rng);
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor<double> t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.all_finite());
    CHECK_THROWS_AS(Tensor<double>({2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor<double>::from({2, 2}, {1.0, 2.0}), std::invalid_argument);
    auto r = Tensor<double>::from({4}, {1, 2, 3, 4}).reshaped({2, 2});
    CHECK(r.dim(0) == 2);
    CHECK(r[3] == 4.0);
    t[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ensure_finite(t, "test"), std::runtime_error);
}

TEST_CASE("conv2d forward: all-ones 3x3 valid convolution") {
    auto layer = plain_conv<double>(1, 1, 3);
    layer.weights.fill(1.0);
    layer.bias.fill(0.0);
    Tensor<double> x({1, 1, 3, 3});
    x.fill(1.0);
    auto y = conv2d_forward(x, layer, 1);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d forward: masked filter emits an all-zero channel") {
    auto layer = plain_conv<double>(2, 3, 3);
    layer.filter_mask[1] = 1;
    Tensor<double> x({2, 2, 5, 5});
    Rng rng(3);
    testsupport::fill_normal(x, rng);
    auto y = conv2d_forward(x, layer, 1);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < 9; ++p) CHECK(y[(b * 3 + 1) * 9 + p] == 0.0);
}

TEST_CASE("conv2d forward: stride 2 matches the naive sextuple-loop oracle") {
    Rng rng(11);
    auto layer = plain_conv<double>(2, 3, 3, 2);
    Tensor<double> x({1, 2, 5, 5});
    testsupport::fill_normal(x, rng);
    auto y = conv2d_forward(x, layer, 2);
    CHECK(y.shape() == Shape{1, 3, 2, 2});
    for (int o = 0; o < 3; ++o) {
        for (int p = 0; p < 2; ++p) {
            for (int q = 0; q < 2; ++q) {
                double acc = layer.bias[o];
                for (int i = 0; i < 2; ++i)
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx)
                            acc += layer.weights[((o * 2 + i) * 3 + dy) * 3 + dx] *
                                   x[(i * 5 + (p * 2 + dy)) * 5 + (q * 2 + dx)];
                CHECK(y[(o * 2 + p) * 2 + q] == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("conv2d errors: shape mismatch and non-integral output") {
    auto layer = plain_conv<double>(1, 1, 3);
    Tensor<double> bad_channels({1, 2, 5, 5});
    CHECK_THROWS_AS(conv2d_forward(bad_channels, layer, 1), std::invalid_argument);
    Tensor<double> x({1, 1, 6, 6});
    CHECK_THROWS_AS(conv2d_forward(x, layer, 2), std::invalid_argument);  // (6-3)/2 not integral
    Tensor<double> ok({1, 1, 5, 5});
    auto y = conv2d_forward(ok, layer, 2);
    Tensor<double> bad_grad({1, 1, 3, 3});
    CHECK_THROWS_AS(conv2d_backward(ok, layer, bad_grad, 2), std::invalid_argument);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
}

TEST_CASE("conv2d backward: zero upstream gradient gives zero gradients") {
    auto layer = plain_conv<double>(2, 2, 3);
    Tensor<double> x({1, 2, 4, 4});
    Rng rng(5);
    testsupport::fill_normal(x, rng);
    Tensor<double> g({1, 2, 2, 2});
    auto r = conv2d_backward(x, layer, g, 1);
    for (std::size_t i = 0; i < r.grad_input.numel(); ++i) CHECK(r.grad_input[i] == 0.0);
    for (std::size_t i = 0; i < r.grad_weights.numel(); ++i) CHECK(r.grad_weights[i] == 0.0);
    for (std::size_t i = 0; i < r.grad_bias.numel(); ++i) CHECK(r.grad_bias[i] == 0.0);
}

TEST_CASE("conv2d backward: scalar output weight gradient is the input patch") {
    auto layer = plain_conv<double>(1, 1, 3);
    Tensor<double> x({1, 1, 3, 3});
    Rng rng(9);
    testsupport::fill_normal(x, rng);
    Tensor<double> g({1, 1, 1, 1});
    g[0] = 2.5;
    auto r = conv2d_backward(x, layer, g, 1);
    for (std::size_t i = 0; i < 9; ++i) CHECK(r.grad_weights[i] == doctest::Approx(2.5 * x[i]));
    CHECK(r.grad_bias[0] == doctest::Approx(2.5));
}

TEST_CASE("conv2d backward: masked filters and channels are skipped, not zeroed after") {
    auto layer = plain_conv<double>(4, 4, 3);
    layer.filter_mask[2] = 1;
    FilterMask in_mask(4, 0);
    in_mask[0] = 1;
    Tensor<double> x({2, 4, 5, 5});
    Rng rng(13);
    testsupport::fill_normal(x, rng);
    auto y = conv2d_forward(x, layer, 1, &in_mask);
    Tensor<double> g(y.shape());
    testsupport::fill_normal(g, rng);
    auto r = conv2d_backward(x, layer, g, 1, &in_mask);
    const std::size_t per = layer.weights_per_filter();
    for (std::size_t i = 2 * per; i < 3 * per; ++i) CHECK(r.grad_weights[i] == 0.0);
    CHECK(r.grad_bias[2] == 0.0);
    // masked input channel receives no gradient
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < 25; ++p) CHECK(r.grad_input[(b * 4 + 0) * 25 + p] == 0.0);
}

TEST_CASE("conv executed-MAC counter matches the closed form on every call") {
    Rng rng(21);
    for (int trial = 0; trial < 12; ++trial) {
        int B = 1 + (int)rng.bounded(3), I = 1 + (int)rng.bounded(4), O = 1 + (int)rng.bounded(5);
        int k = 1 + 2 * (int)rng.bounded(2);
        int S = 1 + (int)rng.bounded(2);
        int M = 1 + (int)rng.bounded(3);
        int N = S * (M - 1) + k;
        auto layer = plain_conv<double>(I, O, k, S);
        FilterMask in_mask((std::size_t)I, 0);
        std::uint64_t i_eff = 0, o_eff = 0;
        for (int i = 0; i < I; ++i) {
            in_mask[(std::size_t)i] = rng.bounded(3) == 0;
            i_eff += !in_mask[(std::size_t)i];
        }
        for (int o = 0; o < O; ++o) {
            layer.filter_mask[(std::size_t)o] = rng.bounded(4) == 0;
            o_eff += !layer.filter_mask[(std::size_t)o];
        }
        Tensor<double> x({(std::size_t)B, (std::size_t)I, (std::size_t)N, (std::size_t)N});
        testsupport::fill_normal(x, rng);
        ConvCounters counters;
        conv2d_forward(x, layer, S, &in_mask, &counters);
        std::uint64_t expect = (std::uint64_t)B * (std::uint64_t)(M * M) * (std::uint64_t)(k * k) * i_eff * o_eff;
        CHECK(counters.forward_macs == expect);
    }
}

TEST_CASE("batchnorm: masked channels pass through as exact zeros") {
    Tensor<double> z({2, 3, 4, 4});
    Rng rng(17);
    testsupport::fill_normal(z, rng);
    Tensor<double> gamma({3}), beta({3}), rm({3}), rv({3});
    gamma.fill(1.0);
    rv.fill(1.0);
    gamma[1] = 0.0;  // masked channel has zeroed parameters
    FilterMask mask(3, 0);
    mask[1] = 1;
    auto fwd = batchnorm_forward(z, gamma, beta, rm, rv, &mask);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < 16; ++p) CHECK(fwd.output[(b * 3 + 1) * 16 + p] == 0.0);
    CHECK(rm[1] == 0.0);  // running stats frozen
    CHECK(rv[1] == 1.0);
    CHECK(rm[0] != 0.0);
}

TEST_CASE("batchnorm: running statistics follow the momentum update") {
    Tensor<double> z = Tensor<double>::from({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor<double> gamma({1}), beta({1}), rm({1}), rv({1});
    gamma.fill(1.0);
    rv.fill(1.0);
    batchnorm_forward(z, gamma, beta, rm, rv, nullptr, 0.1, 1e-5);
    CHECK(rm[0] == doctest::Approx(0.1 * 2.5));
    // biased variance 1.25, unbiased 4/3 * 1.25
    CHECK(rv[0] == doctest::Approx(0.9 * 1.0 + 0.1 * (1.25 * 4.0 / 3.0)));
}

TEST_CASE("relu forward/backward") {
    Tensor<double> x = Tensor<double>::from({4}, {-1.0, 0.0, 0.5, 2.0});
    auto y = relu_forward(x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 0.0);
    CHECK(y[2] == 0.5);
    Tensor<double> g = Tensor<double>::from({4}, {1.0, 1.0, 1.0, 1.0});
    auto gx = relu_backward(x, g);
    CHECK(gx[0] == 0.0);  // gradient zeroed at input <= 0
    CHECK(gx[1] == 0.0);
    CHECK(gx[2] == 1.0);
}

TEST_CASE("maxpool: argmax routing and odd-side rejection") {
    Tensor<double> x = Tensor<double>::from({1, 1, 2, 2}, {1.0, 5.0, 3.0, 2.0});
    auto r = maxpool2x2_forward(x);
    CHECK(r.output[0] == 5.0);
    Tensor<double> g({1, 1, 1, 1});
    g[0] = 7.0;
    auto gx = maxpool2x2_backward(x.shape(), r.argmax, g);
    CHECK(gx[1] == 7.0);
    CHECK(gx[0] == 0.0);
    Tensor<double> odd({1, 1, 3, 3});
    CHECK_THROWS_AS(maxpool2x2_forward(odd), std::invalid_argument);
}

TEST_CASE("softmax cross entropy: symmetric two-class example") {
    Tensor<double> logits({1, 2});
    auto r = softmax_cross_entropy(logits, {0});
    CHECK(r.loss == doctest::Approx(std::log(2.0)));
    CHECK(r.grad_logits[0] == doctest::Approx(-0.5));
    CHECK(r.grad_logits[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax cross entropy: per-sample gradient sums to zero over classes") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        int B = 1 + (int)rng.bounded(5), C = 2 + (int)rng.bounded(6);
        Tensor<double> logits({(std::size_t)B, (std::size_t)C});
        testsupport::fill_normal(logits, rng, 3.0);
        std::vector<int> labels((std::size_t)B);
        for (auto& l : labels) l = (int)rng.bounded((std::uint64_t)C);
        auto r = softmax_cross_entropy(logits, labels);
        for (int b = 0; b < B; ++b) {
            double s = 0.0;
            for (int c = 0; c < C; ++c) s += r.grad_logits[(std::size_t)(b * C + c)];
            CHECK(s == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax cross entropy errors") {
    Tensor<double> logits({1, 2});
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {2}), std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 1}), std::invalid_argument);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor<double> p = Tensor<double>::from({3}, {1.0, -2.0, 0.5});
    Tensor<double> g({3});
    Moments<double> mom(p.shape());
    adam_step(p, g, mom, AdamHyper{}, 1);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
    CHECK(p[2] == 0.5);
}

TEST_CASE("adam: first step on a unit gradient") {
    Tensor<double> p({1});
    Tensor<double> g({1});
    g[0] = 1.0;
    Moments<double> mom(p.shape());
    AdamHyper h;
    adam_step(p, g, mom, h, 1);
    // bias-corrected moments are exactly 1, so the step is lr / (1 + eps)
    CHECK(p[0] == doctest::Approx(-h.learning_rate / (1.0 + h.epsilon)).epsilon(1e-12));
}

TEST_CASE("adam: masked filter stays exactly zero across 100 steps") {
    Rng rng(31);
    auto layer = plain_conv<double>(2, 3, 3);
    const std::size_t per = layer.weights_per_filter();
    layer.filter_mask[1] = 1;
    for (std::size_t i = per; i < 2 * per; ++i) layer.weights[i] = 0.0;
    for (int t = 1; t <= 100; ++t) {
        Tensor<double> g(layer.weights.shape());
        testsupport::fill_normal(g, rng);
        adam_step(layer.weights, g, layer.weights_mom, AdamHyper{}, t, &layer.filter_mask);
    }
    for (std::size_t i = per; i < 2 * per; ++i) {
        CHECK(layer.weights[i] == 0.0);
        CHECK(layer.weights_mom.first[i] == 0.0);
        CHECK(layer.weights_mom.second[i] == 0.0);
    }
}

TEST_CASE("adam: non-finite gradient is rejected") {
    Tensor<double> p({2}), g({2});
    g[1] = std::numeric_limits<double>::infinity();
    Moments<double> mom(p.shape());
    CHECK_THROWS_AS(adam_step(p, g, mom, AdamHyper{}, 1), std::runtime_error);
}

TEST_CASE("gradient suite: analytic kernels match central finite differences") {
    for (const auto& rep : testsupport::run_gradient_suite(20, 20260809)) {
        INFO(rep.kernel, " max rel err ", rep.max_rel_err);
        CHECK(rep.ok);
        CHECK(rep.max_rel_err < 1e-4);
    }
}

namespace {

NetworkArch micro_arch(int classes) {
    NetworkArch arch;
    arch.layers = {{LayerOp::Conv, 4, 3, 1, 0},
                   {LayerOp::Conv, 8, 3, 1, 0},
                   {LayerOp::Pool, 0, 0, 0, 0},
                   {LayerOp::Linear, 0, 0, 0, classes}};
    return arch;
}

template <typename T>
std::vector<T> all_params(const Network<T>& net) {
    std::vector<T> out;
    for (const auto& l : net.conv_layers()) {
        out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
        out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
        out.insert(out.end(), l.bn_gamma.values().begin(), l.bn_gamma.values().end());
        out.insert(out.end(), l.bn_beta.values().begin(), l.bn_beta.values().end());
        out.insert(out.end(), l.bn_running_mean.values().begin(), l.bn_running_mean.values().end());
        out.insert(out.end(), l.bn_running_var.values().begin(), l.bn_running_var.values().end());
    }
    for (const auto& l : net.linear_layers()) {
        out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
        out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
    }
    return out;
}

template <typename T>
std::vector<T> train_micro_net(std::uint64_t seed, int steps) {
    Network<T> net(micro_arch(3), 1, 10, seed);
    Rng rng(mix_seed(seed, 0xda7a));
    for (int t = 1; t <= steps; ++t) {
        Tensor<T> x({4, 1, 10, 10});
        for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<T>(rng.normal());
        std::vector<int> y(4);
        for (auto& l : y) l = (int)rng.bounded(3);
        net.train_batch(x, y, AdamHyper{}, t);
    }
    return all_params(net);
}

}  // namespace

TEST_CASE("determinism: identical seed and thread count give bit-identical parameters") {
    auto a = train_micro_net<float>(99, 8);
    auto b = train_micro_net<float>(99, 8);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("mask absorption: masked filters stay bit-zero through training") {
    Network<double> net(micro_arch(3), 1, 10, 5);
    auto& l0 = net.conv_layers()[0];
    auto& l1 = net.conv_layers()[1];
    // mask filter 2 of layer 0 and filter 5 of layer 1 by hand
    for (auto [layer, f] : {std::pair<ConvLayerState<double>*, int>{&l0, 2}, {&l1, 5}}) {
        std::size_t per = layer->weights_per_filter();
        layer->filter_mask[(std::size_t)f] = 1;
        for (std::size_t i = (std::size_t)f * per; i < (std::size_t)(f + 1) * per; ++i) layer->weights[i] = 0;
        layer->bias[(std::size_t)f] = 0;
        layer->bn_gamma[(std::size_t)f] = 0;
        layer->bn_beta[(std::size_t)f] = 0;
    }
    Rng rng(8);
    for (int t = 1; t <= 5; ++t) {
        Tensor<double> x({4, 1, 10, 10});
        testsupport::fill_normal(x, rng);
        std::vector<int> y(4);
        for (auto& l : y) l = (int)rng.bounded(3);
        net.train_batch(x, y, AdamHyper{}, t);
    }
    std::size_t per0 = l0.weights_per_filter();
    for (std::size_t i = 2 * per0; i < 3 * per0; ++i) CHECK(l0.weights[i] == 0.0);
    CHECK(l0.bias[2] == 0.0);
    CHECK(l0.bn_gamma[2] == 0.0);
    CHECK(l0.bn_beta[2] == 0.0);
    std::size_t per1 = l1.weights_per_filter();
    for (std::size_t i = 5 * per1; i < 6 * per1; ++i) CHECK(l1.weights[i] == 0.0);

    // masked output channels are exactly zero in a training-mode forward
    Tensor<double> x({2, 1, 10, 10});
    testsupport::fill_normal(x, rng);
    auto st = net.forward_train(x, false);
    const auto& act0 = st.conv[0].pre_relu;
    const std::size_t plane0 = act0.dim(2) * act0.dim(3);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t p = 0; p < plane0; ++p) CHECK(act0[(b * act0.dim(1) + 2) * plane0 + p] == 0.0);
}
