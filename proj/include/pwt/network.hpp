#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pwt/kernels.hpp"
#include "pwt/layers.hpp"
#include "pwt/tensor.hpp"

namespace pwt {

enum class LayerOp { Conv, Pool, Linear };

// One entry of the architecture description. Conv layers are implicitly
// followed by batch normalization (when enabled) and ReLU; consecutive
// linear layers get a ReLU between them, the last one emits logits.
struct ArchLayer {
    LayerOp op = LayerOp::Conv;
    int filters = 0;  // conv
    int kernel = 3;   // conv
    int stride = 1;   // conv
    int out = 0;      // linear
};

struct NetworkArch {
    std::vector<ArchLayer> layers;
    bool batchnorm = true;
};

template <typename T>
class Network;

// Per-epoch running sums of post-ReLU conv activations, one slot per
// (conv layer, output channel), plus the number of images forwarded.
// Reset at every epoch start.
template <typename T>
class ActivationAccumulator {
public:
    ActivationAccumulator() = default;

    void reset(const Network<T>& net);

    void add_activations(std::size_t conv_index, const Tensor<T>& post_relu) {
        if (conv_index >= sums_.size())
            throw std::invalid_argument("ActivationAccumulator: unknown conv layer index");
        auto& sums = sums_[conv_index];
        const std::size_t B = post_relu.dim(0), C = post_relu.dim(1), plane = post_relu.dim(2) * post_relu.dim(3);
        if (C != sums.size())
            throw std::invalid_argument("ActivationAccumulator: channel count mismatch for layer " +
                                        std::to_string(conv_index));
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
                const T* a = post_relu.data() + ((b * C + c) * plane);
                double s = 0.0;
                for (std::size_t p = 0; p < plane; ++p) s += static_cast<double>(a[p]);
                sums[c] += s;
            }
        }
    }

    void add_images(std::uint64_t n) { images_seen_ += n; }

    std::uint64_t images_seen() const { return images_seen_; }
    const std::vector<std::vector<double>>& channel_sums() const { return sums_; }
    std::vector<std::vector<double>>& channel_sums() { return sums_; }
    std::size_t layer_count() const { return sums_.size(); }

private:
    std::vector<std::vector<double>> sums_;
    std::uint64_t images_seen_ = 0;
};

// A feed-forward stack of conv(+bn+relu), 2x2 max-pool and linear layers,
// trained with Adam on softmax cross-entropy. Owns all parameter state;
// kernels do the math. Single-threaded and deterministic for a fixed seed.
template <typename T>
class Network {
public:
    Network(const NetworkArch& arch, int in_channels, int in_side, std::uint64_t seed) : arch_(arch) {
        if (in_channels <= 0 || in_side <= 0)
            throw std::invalid_argument("Network: input dimensions must be positive");
        Rng rng(mix_seed(seed, 0x496e6974ull));  // parameter-init stream

        int channels = in_channels;
        int side = in_side;
        bool seen_linear = false;
        int prev_conv = -1;

        for (const ArchLayer& a : arch.layers) {
            Placed p;
            p.op = a.op;
            switch (a.op) {
                case LayerOp::Conv: {
                    if (seen_linear) throw std::invalid_argument("Network: conv layer after linear layer");
                    if (side < a.kernel)
                        throw std::invalid_argument("Network: feature map side " + std::to_string(side) +
                                                    " smaller than kernel " + std::to_string(a.kernel));
                    if ((side - a.kernel) % a.stride != 0)
                        throw std::invalid_argument("Network: non-integral conv output side");
                    p.index = conv_.size();
                    p.input_conv = prev_conv;
                    conv_.push_back(make_conv_layer<T>(channels, a.filters, a.kernel, a.stride, rng));
                    prev_conv = static_cast<int>(p.index);
                    channels = a.filters;
                    side = (side - a.kernel) / a.stride + 1;
                    break;
                }
                case LayerOp::Pool: {
                    if (seen_linear) throw std::invalid_argument("Network: pool layer after linear layer");
                    if (side % 2 != 0)
                        throw std::invalid_argument("Network: pool needs even feature map side, have " +
                                                    std::to_string(side));
                    side /= 2;
                    break;
                }
                case LayerOp::Linear: {
                    int in_features = seen_linear ? last_linear_out_ : channels * side * side;
                    p.index = linear_.size();
                    linear_.push_back(make_linear_layer<T>(in_features, a.out, rng));
                    last_linear_out_ = a.out;
                    seen_linear = true;
                    break;
                }
            }
            placed_.push_back(p);
        }
        if (!seen_linear) throw std::invalid_argument("Network: architecture needs a final linear layer");
        out_classes_ = last_linear_out_;
    }

    int num_classes() const { return out_classes_; }
    bool batchnorm_enabled() const { return arch_.batchnorm; }

    std::vector<ConvLayerState<T>>& conv_layers() { return conv_; }
    const std::vector<ConvLayerState<T>>& conv_layers() const { return conv_; }
    std::vector<LinearLayerState<T>>& linear_layers() { return linear_; }
    const std::vector<LinearLayerState<T>>& linear_layers() const { return linear_; }

    // Input-channel mask seen by conv layer ci: the filter mask of the conv
    // layer directly upstream (pooling preserves channels), none for the
    // first conv layer.
    const FilterMask* input_mask_for(std::size_t ci) const {
        int up = -1;
        for (const Placed& p : placed_)
            if (p.op == LayerOp::Conv && p.index == ci) up = p.input_conv;
        if (up < 0) return nullptr;
        return &conv_[static_cast<std::size_t>(up)].filter_mask;
    }

    std::uint64_t total_conv_filters() const {
        std::uint64_t n = 0;
        for (const auto& l : conv_) n += static_cast<std::uint64_t>(l.out_channels);
        return n;
    }

    // Trainable parameters not owned by a masked filter. Weights feeding from
    // pruned input channels still count; they belong to live filters.
    std::uint64_t unmasked_parameter_count() const {
        std::uint64_t n = 0;
        for (const auto& l : conv_) {
            std::uint64_t per_filter = l.weights_per_filter() + 1 + (arch_.batchnorm ? 2 : 0);
            for (int o = 0; o < l.out_channels; ++o)
                if (!l.filter_mask[static_cast<std::size_t>(o)]) n += per_filter;
        }
        for (const auto& l : linear_) n += l.weights.numel() + l.bias.numel();
        return n;
    }

    ConvCounters total_counters() const {
        ConvCounters c;
        for (const auto& l : conv_) c += l.counters;
        return c;
    }

    // Forward in training mode. Caches everything backward() needs.
    struct ForwardState {
        Tensor<T> logits;
        struct ConvCache {
            Tensor<T> input;
            Tensor<T> pre_bn;      // conv output, only kept when batchnorm is on
            Tensor<T> normalized;  // bn intermediate
            std::vector<double> inv_std;
            Tensor<T> pre_relu;
        };
        struct PoolCache {
            Shape input_shape;
            std::vector<std::uint32_t> argmax;
        };
        struct LinearCache {
            Tensor<T> input;
            Tensor<T> pre_relu;  // only for hidden linear layers
        };
        std::vector<ConvCache> conv;
        std::vector<PoolCache> pool;
        std::vector<LinearCache> linear;
        Shape flatten_shape;
    };

    ForwardState forward_train(const Tensor<T>& batch, bool count_macs = true,
                               ActivationAccumulator<T>* acc = nullptr) {
        ForwardState st;
        Tensor<T> x = batch;
        bool flattened = false;
        for (const Placed& p : placed_) {
            switch (p.op) {
                case LayerOp::Conv: {
                    ConvLayerState<T>& l = conv_[p.index];
                    const FilterMask* in_mask = p.input_conv >= 0 ? &conv_[p.input_conv].filter_mask : nullptr;
                    typename ForwardState::ConvCache cc;
                    cc.input = x;
                    Tensor<T> z = conv2d_forward(x, l, l.stride, in_mask, count_macs ? &l.counters : nullptr);
                    if (arch_.batchnorm) {
                        auto bn = batchnorm_forward(z, l.bn_gamma, l.bn_beta, l.bn_running_mean, l.bn_running_var,
                                                    &l.filter_mask, bn_momentum_, bn_eps_);
                        cc.pre_bn = std::move(z);
                        cc.normalized = std::move(bn.normalized);
                        cc.inv_std = std::move(bn.inv_std);
                        cc.pre_relu = std::move(bn.output);
                    } else {
                        cc.pre_relu = std::move(z);
                    }
                    x = relu_forward(cc.pre_relu);
                    if (acc) acc->add_activations(p.index, x);
                    st.conv.push_back(std::move(cc));
                    break;
                }
                case LayerOp::Pool: {
                    typename ForwardState::PoolCache pc;
                    pc.input_shape = x.shape();
                    auto r = maxpool2x2_forward(x);
                    pc.argmax = std::move(r.argmax);
                    x = std::move(r.output);
                    st.pool.push_back(std::move(pc));
                    break;
                }
                case LayerOp::Linear: {
                    if (!flattened) {
                        st.flatten_shape = x.shape();
                        x = x.reshaped({x.dim(0), x.numel() / x.dim(0)});
                        flattened = true;
                    } else {
                        // hidden linear output passes through ReLU
                        typename ForwardState::LinearCache& prev = st.linear.back();
                        prev.pre_relu = x;
                        x = relu_forward(x);
                    }
                    typename ForwardState::LinearCache lc;
                    lc.input = x;
                    x = linear_forward(x, linear_[p.index]);
                    st.linear.push_back(std::move(lc));
                    break;
                }
            }
        }
        if (acc) acc->add_images(batch.dim(0));
        st.logits = std::move(x);
        return st;
    }

    // Inference-mode forward (running batch-norm statistics, no caches, no
    // counter updates). Read-only; safe to call concurrently.
    Tensor<T> forward_eval(const Tensor<T>& batch) const {
        Tensor<T> x = batch;
        bool flattened = false;
        std::size_t li = 0;
        for (const Placed& p : placed_) {
            switch (p.op) {
                case LayerOp::Conv: {
                    const ConvLayerState<T>& l = conv_[p.index];
                    const FilterMask* in_mask = p.input_conv >= 0 ? &conv_[p.input_conv].filter_mask : nullptr;
                    Tensor<T> z = conv2d_forward(x, l, l.stride, in_mask, nullptr);
                    if (arch_.batchnorm)
                        z = batchnorm_eval_forward(z, l.bn_gamma, l.bn_beta, l.bn_running_mean, l.bn_running_var,
                                                   &l.filter_mask, bn_eps_);
                    x = relu_forward(z);
                    break;
                }
                case LayerOp::Pool: {
                    x = maxpool2x2_forward(x).output;
                    break;
                }
                case LayerOp::Linear: {
                    if (!flattened) {
                        x = x.reshaped({x.dim(0), x.numel() / x.dim(0)});
                        flattened = true;
                    } else {
                        x = relu_forward(x);
                    }
                    x = linear_forward(x, linear_[li]);
                    ++li;
                    break;
                }
            }
        }
        return x;
    }

    // Backpropagates grad_logits and applies one Adam step to every live
    // parameter. t is the 1-based optimizer step index shared by all
    // parameters. Gradients of masked filters are skipped in the kernels and
    // their parameters and moments stay frozen.
    void backward_and_step(const ForwardState& st, const Tensor<T>& grad_logits, const AdamHyper& hyper,
                           std::int64_t t, bool count_macs = true) {
        Tensor<T> g = grad_logits;
        std::size_t ci = st.conv.size();
        std::size_t pi = st.pool.size();
        std::size_t li = st.linear.size();
        bool unflattened = false;

        for (std::size_t ip = placed_.size(); ip-- > 0;) {
            const Placed& p = placed_[ip];
            switch (p.op) {
                case LayerOp::Linear: {
                    --li;
                    LinearLayerState<T>& l = linear_[p.index];
                    auto r = linear_backward(st.linear[li].input, l, g);
                    adam_step(l.weights, r.grad_weights, l.weights_mom, hyper, t);
                    adam_step(l.bias, r.grad_bias, l.bias_mom, hyper, t);
                    g = std::move(r.grad_input);
                    if (li > 0) {
                        g = relu_backward(st.linear[li - 1].pre_relu, g);
                    } else {
                        g = g.reshaped(st.flatten_shape);
                        unflattened = true;
                    }
                    break;
                }
                case LayerOp::Pool: {
                    --pi;
                    g = maxpool2x2_backward(st.pool[pi].input_shape, st.pool[pi].argmax, g);
                    break;
                }
                case LayerOp::Conv: {
                    --ci;
                    ConvLayerState<T>& l = conv_[p.index];
                    const typename ForwardState::ConvCache& cc = st.conv[ci];
                    const FilterMask* in_mask = p.input_conv >= 0 ? &conv_[p.input_conv].filter_mask : nullptr;
                    g = relu_backward(cc.pre_relu, g);
                    if (arch_.batchnorm) {
                        auto bn = batchnorm_backward(g, cc.normalized, cc.inv_std, l.bn_gamma, &l.filter_mask);
                        adam_step(l.bn_gamma, bn.grad_gamma, l.gamma_mom, hyper, t, &l.filter_mask);
                        adam_step(l.bn_beta, bn.grad_beta, l.beta_mom, hyper, t, &l.filter_mask);
                        g = std::move(bn.grad_input);
                    }
                    auto r = conv2d_backward(cc.input, l, g, l.stride, in_mask,
                                             count_macs ? &l.counters : nullptr, true);
                    adam_step(l.weights, r.grad_weights, l.weights_mom, hyper, t, &l.filter_mask);
                    adam_step(l.bias, r.grad_bias, l.bias_mom, hyper, t, &l.filter_mask);
                    g = std::move(r.grad_input);
                    break;
                }
            }
        }
        (void)unflattened;
    }

    struct TrainBatchResult {
        double loss = 0.0;
        std::size_t correct = 0;
    };

    TrainBatchResult train_batch(const Tensor<T>& batch, const std::vector<int>& labels, const AdamHyper& hyper,
                                 std::int64_t t, ActivationAccumulator<T>* acc = nullptr, bool count_macs = true) {
        ForwardState st = forward_train(batch, count_macs, acc);
        auto ce = softmax_cross_entropy(st.logits, labels);
        TrainBatchResult r;
        r.loss = ce.loss;
        r.correct = count_correct(st.logits, labels);
        backward_and_step(st, ce.grad_logits, hyper, t, count_macs);
        return r;
    }

    static std::size_t count_correct(const Tensor<T>& logits, const std::vector<int>& labels) {
        const std::size_t B = logits.dim(0), C = logits.dim(1);
        std::size_t correct = 0;
        for (std::size_t b = 0; b < B; ++b) {
            const T* lb = logits.data() + b * C;
            std::size_t best = 0;
            for (std::size_t c = 1; c < C; ++c)
                if (lb[c] > lb[best]) best = c;
            correct += (static_cast<int>(best) == labels[b]);
        }
        return correct;
    }

private:
    struct Placed {
        LayerOp op = LayerOp::Conv;
        std::size_t index = 0;
        int input_conv = -1;  // conv layers only
    };

    NetworkArch arch_;
    std::vector<Placed> placed_;
    std::vector<ConvLayerState<T>> conv_;
    std::vector<LinearLayerState<T>> linear_;
    int last_linear_out_ = 0;
    int out_classes_ = 0;
    double bn_momentum_ = 0.1;
    double bn_eps_ = 1e-5;
};

template <typename T>
void ActivationAccumulator<T>::reset(const Network<T>& net) {
    sums_.clear();
    for (const auto& l : net.conv_layers()) sums_.emplace_back(static_cast<std::size_t>(l.out_channels), 0.0);
    images_seen_ = 0;
}

}  // namespace pwt
