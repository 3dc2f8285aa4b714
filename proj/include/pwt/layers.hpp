#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pwt/tensor.hpp"

namespace pwt {

// Per-filter prune flags for a conv layer. 1 = pruned.
using FilterMask = std::vector<std::uint8_t>;

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Cumulative multiply-accumulate tallies for one conv layer, split by pass.
// Skipped (pruned) channel pairs contribute nothing; that is the whole point
// of instrumenting the kernels instead of estimating after the fact.
//
// forward_macs and error_macs count the multiplies the kernels literally
// execute. weight_grad_macs is booked per executed channel pair using the
// (input_side - output_side)/stride + 1 window convention so the tally is
// directly comparable with the analytic per-layer op model; at stride 1 the
// two conventions coincide with the literal multiply count.
struct ConvCounters {
    std::uint64_t forward_macs = 0;
    std::uint64_t error_macs = 0;
    std::uint64_t weight_grad_macs = 0;

    std::uint64_t total() const { return forward_macs + error_macs + weight_grad_macs; }

    ConvCounters& operator+=(const ConvCounters& o) {
        forward_macs += o.forward_macs;
        error_macs += o.error_macs;
        weight_grad_macs += o.weight_grad_macs;
        return *this;
    }
};

template <typename T>
struct Moments {
    Tensor<T> first;
    Tensor<T> second;

    explicit Moments() = default;
    explicit Moments(const Shape& shape) : first(shape), second(shape) {}
};

// State of one prunable conv layer: weights [O,I,k,k], bias [O], batch-norm
// parameters and running statistics [O], Adam moments per parameter, and the
// persistent filter mask.
//
// Invariant: once filter_mask[o] is set, weights[o,...], bias[o], bn_gamma[o]
// and bn_beta[o] are exactly zero and frozen, along with their moments.
template <typename T>
struct ConvLayerState {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_side = 0;
    int stride = 1;

    Tensor<T> weights;  // [O, I, k, k]
    Tensor<T> bias;     // [O]
    Tensor<T> bn_gamma, bn_beta;
    Tensor<T> bn_running_mean, bn_running_var;

    Moments<T> weights_mom, bias_mom, gamma_mom, beta_mom;

    FilterMask filter_mask;
    mutable ConvCounters counters;

    std::size_t weights_per_filter() const {
        return static_cast<std::size_t>(in_channels) * kernel_side * kernel_side;
    }
};

template <typename T>
ConvLayerState<T> make_conv_layer(int in_channels, int out_channels, int kernel_side, int stride, Rng& rng) {
    if (in_channels <= 0 || out_channels <= 0 || kernel_side <= 0 || stride <= 0)
        throw std::invalid_argument("make_conv_layer: dimensions and stride must be positive");
    ConvLayerState<T> l;
    l.in_channels = in_channels;
    l.out_channels = out_channels;
    l.kernel_side = kernel_side;
    l.stride = stride;

    std::size_t o = static_cast<std::size_t>(out_channels);
    l.weights = Tensor<T>({o, static_cast<std::size_t>(in_channels), static_cast<std::size_t>(kernel_side),
                           static_cast<std::size_t>(kernel_side)});
    double scale = std::sqrt(2.0 / (static_cast<double>(in_channels) * kernel_side * kernel_side));
    for (std::size_t i = 0; i < l.weights.numel(); ++i) l.weights[i] = static_cast<T>(rng.normal() * scale);

    l.bias = Tensor<T>({o});
    l.bn_gamma = Tensor<T>({o});
    l.bn_gamma.fill(T{1});
    l.bn_beta = Tensor<T>({o});
    l.bn_running_mean = Tensor<T>({o});
    l.bn_running_var = Tensor<T>({o});
    l.bn_running_var.fill(T{1});

    l.weights_mom = Moments<T>(l.weights.shape());
    l.bias_mom = Moments<T>(l.bias.shape());
    l.gamma_mom = Moments<T>(l.bn_gamma.shape());
    l.beta_mom = Moments<T>(l.bn_beta.shape());

    l.filter_mask.assign(o, 0);
    return l;
}

template <typename T>
struct LinearLayerState {
    int in_features = 0;
    int out_features = 0;
    Tensor<T> weights;  // [out, in]
    Tensor<T> bias;     // [out]
    Moments<T> weights_mom, bias_mom;
};

template <typename T>
LinearLayerState<T> make_linear_layer(int in_features, int out_features, Rng& rng) {
    if (in_features <= 0 || out_features <= 0)
        throw std::invalid_argument("make_linear_layer: feature counts must be positive");
    LinearLayerState<T> l;
    l.in_features = in_features;
    l.out_features = out_features;
    l.weights = Tensor<T>({static_cast<std::size_t>(out_features), static_cast<std::size_t>(in_features)});
    double scale = std::sqrt(2.0 / static_cast<double>(in_features));
    for (std::size_t i = 0; i < l.weights.numel(); ++i) l.weights[i] = static_cast<T>(rng.normal() * scale);
    l.bias = Tensor<T>({static_cast<std::size_t>(out_features)});
    l.weights_mom = Moments<T>(l.weights.shape());
    l.bias_mom = Moments<T>(l.bias.shape());
    return l;
}

// One Adam update with bias correction, t >= 1. When mask is given, the
// parameter's first dimension indexes filters and masked slices are skipped
// outright, leaving value and moments untouched.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, Moments<T>& mom, const AdamHyper& h, std::int64_t t,
               const FilterMask* mask = nullptr) {
    if (param.shape() != grad.shape())
        throw std::invalid_argument("adam_step: parameter/gradient shape mismatch " + shape_str(param.shape()) +
                                    " vs " + shape_str(grad.shape()));
    if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
    if (!grad.all_finite()) throw std::runtime_error("adam_step: non-finite gradient");

    std::size_t n = param.numel();
    std::size_t slice = n;
    std::size_t groups = 1;
    if (mask) {
        if (param.dim(0) != mask->size())
            throw std::invalid_argument("adam_step: mask length does not match leading dimension");
        groups = mask->size();
        slice = n / groups;
    }

    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));

    for (std::size_t g = 0; g < groups; ++g) {
        if (mask && (*mask)[g]) continue;
        std::size_t base = g * slice;
        for (std::size_t i = base; i < base + slice; ++i) {
            double gv = static_cast<double>(grad[i]);
            double m = h.beta1 * static_cast<double>(mom.first[i]) + (1.0 - h.beta1) * gv;
            double v = h.beta2 * static_cast<double>(mom.second[i]) + (1.0 - h.beta2) * gv * gv;
            mom.first[i] = static_cast<T>(m);
            mom.second[i] = static_cast<T>(v);
            double mhat = m / c1;
            double vhat = v / c2;
            param[i] = static_cast<T>(static_cast<double>(param[i]) -
                                      h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon));
        }
    }
}

}  // namespace pwt
