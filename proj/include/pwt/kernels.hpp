#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pwt/layers.hpp"
#include "pwt/tensor.hpp"

// Training kernels for small CNNs. All kernels are pure functions of their
// inputs, run single-threaded with a fixed accumulation order, and validate
// that every produced value is finite. Convolutions use valid (no) padding.
//
// Pruned filters are skipped, not computed and zeroed: a masked output filter
// contributes no multiplies to any pass, and input channels flagged by
// input_mask (filters pruned in the layer upstream, hence exactly-zero
// feature maps) are skipped likewise. The per-layer counters therefore
// measure the work that actually remains after pruning.

namespace pwt {

namespace detail {

template <typename T>
void check_conv_args(const Tensor<T>& input, const ConvLayerState<T>& layer, int stride) {
    if (input.ndim() != 4) throw std::invalid_argument("conv2d: input must be 4-d, got " + shape_str(input.shape()));
    if (stride <= 0) throw std::invalid_argument("conv2d: stride must be positive");
    if (input.dim(1) != static_cast<std::size_t>(layer.in_channels))
        throw std::invalid_argument("conv2d: input channel mismatch");
    std::size_t k = static_cast<std::size_t>(layer.kernel_side);
    if (input.dim(2) < k || input.dim(3) < k)
        throw std::invalid_argument("conv2d: input smaller than kernel");
    if ((input.dim(2) - k) % stride != 0 || (input.dim(3) - k) % stride != 0)
        throw std::invalid_argument("conv2d: non-integral output side for stride " + std::to_string(stride));
    if (layer.filter_mask.size() != static_cast<std::size_t>(layer.out_channels))
        throw std::invalid_argument("conv2d: filter mask length mismatch");
}

inline std::uint64_t count_unmasked(const FilterMask& m) {
    std::uint64_t c = 0;
    for (auto v : m) c += (v == 0);
    return c;
}

inline std::uint64_t count_effective(std::size_t n, const FilterMask* mask) {
    if (!mask) return n;
    std::uint64_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += !(*mask)[i];
    return c;
}

}  // namespace detail

// Valid-padding cross-correlation. Output channel o is identically zero when
// filter o is masked. forward_macs grows by exactly
// B * Mh * Mw * k^2 * I_unmasked * O_unmasked.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const ConvLayerState<T>& layer, int stride,
                         const FilterMask* input_mask = nullptr, ConvCounters* counters = nullptr) {
    detail::check_conv_args(input, layer, stride);
    const std::size_t B = input.dim(0), I = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t O = static_cast<std::size_t>(layer.out_channels);
    const std::size_t k = static_cast<std::size_t>(layer.kernel_side);
    const std::size_t S = static_cast<std::size_t>(stride);
    const std::size_t Mh = (H - k) / S + 1, Mw = (W - k) / S + 1;
    if (input_mask && input_mask->size() != I)
        throw std::invalid_argument("conv2d_forward: input mask length mismatch");

    Tensor<T> out({B, O, Mh, Mw});
    const T* x = input.data();
    const T* w = layer.weights.data();
    T* y = out.data();

    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t o = 0; o < O; ++o) {
            T* yc = y + ((b * O + o) * Mh) * Mw;
            if (layer.filter_mask[o]) continue;  // slice stays zero
            const T bias = layer.bias[o];
            for (std::size_t p = 0; p < Mh * Mw; ++p) yc[p] = bias;
            for (std::size_t i = 0; i < I; ++i) {
                if (input_mask && (*input_mask)[i]) continue;
                const T* xc = x + ((b * I + i) * H) * W;
                const T* wc = w + ((o * I + i) * k) * k;
                for (std::size_t dy = 0; dy < k; ++dy) {
                    for (std::size_t dx = 0; dx < k; ++dx) {
                        const T wv = wc[dy * k + dx];
                        for (std::size_t p = 0; p < Mh; ++p) {
                            const T* xrow = xc + (p * S + dy) * W + dx;
                            T* yrow = yc + p * Mw;
                            for (std::size_t q = 0; q < Mw; ++q) yrow[q] += wv * xrow[q * S];
                        }
                    }
                }
            }
        }
    }

    if (counters) {
        std::uint64_t o_eff = detail::count_unmasked(layer.filter_mask);
        std::uint64_t in_eff = detail::count_effective(I, input_mask);
        counters->forward_macs += static_cast<std::uint64_t>(B) * Mh * Mw * k * k * in_eff * o_eff;
    }
    ensure_finite(out, "conv2d_forward");
    return out;
}

template <typename T>
struct Conv2dBackwardResult {
    Tensor<T> grad_input;
    Tensor<T> grad_weights;
    Tensor<T> grad_bias;
};

// Backward pass for conv2d_forward. Gradients for masked filters and masked
// input channels are never computed (the loops skip them), so grad_weights
// and grad_bias rows for masked filters are exactly zero and grad_input
// channels under the input mask are exactly zero.
//
// grad_input is evaluated gather-style over every input position, executing
// k^2 taps per (input channel, filter) pair; error_macs therefore grows by
// B * H * W * k^2 * I_unmasked * O_unmasked. weight_grad_macs is booked per
// the window convention described on ConvCounters.
template <typename T>
Conv2dBackwardResult<T> conv2d_backward(const Tensor<T>& input, const ConvLayerState<T>& layer,
                                        const Tensor<T>& grad_out, int stride,
                                        const FilterMask* input_mask = nullptr, ConvCounters* counters = nullptr,
                                        bool compute_grad_input = true) {
    detail::check_conv_args(input, layer, stride);
    const std::size_t B = input.dim(0), I = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t O = static_cast<std::size_t>(layer.out_channels);
    const std::size_t k = static_cast<std::size_t>(layer.kernel_side);
    const std::size_t S = static_cast<std::size_t>(stride);
    const std::size_t Mh = (H - k) / S + 1, Mw = (W - k) / S + 1;
    if (grad_out.shape() != Shape{B, O, Mh, Mw})
        throw std::invalid_argument("conv2d_backward: grad_out shape " + shape_str(grad_out.shape()) +
                                    " inconsistent with forward output");
    if (input_mask && input_mask->size() != I)
        throw std::invalid_argument("conv2d_backward: input mask length mismatch");

    Conv2dBackwardResult<T> r;
    r.grad_input = Tensor<T>({B, I, H, W});
    r.grad_weights = Tensor<T>(layer.weights.shape());
    r.grad_bias = Tensor<T>(layer.bias.shape());

    const T* x = input.data();
    const T* w = layer.weights.data();
    const T* g = grad_out.data();

    std::uint64_t in_eff = 0;
    for (std::size_t i = 0; i < I; ++i) in_eff += !(input_mask && (*input_mask)[i]);
    const std::uint64_t o_eff = detail::count_unmasked(layer.filter_mask);

    // Bias gradient: plain sums over the output map, masked filters skipped.
    for (std::size_t o = 0; o < O; ++o) {
        if (layer.filter_mask[o]) continue;
        double acc = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const T* gc = g + ((b * O + o) * Mh) * Mw;
            for (std::size_t p = 0; p < Mh * Mw; ++p) acc += static_cast<double>(gc[p]);
        }
        r.grad_bias[o] = static_cast<T>(acc);
    }

    // Weight gradient.
    for (std::size_t o = 0; o < O; ++o) {
        if (layer.filter_mask[o]) continue;
        for (std::size_t i = 0; i < I; ++i) {
            if (input_mask && (*input_mask)[i]) continue;
            T* dwc = r.grad_weights.data() + ((o * I + i) * k) * k;
            for (std::size_t dy = 0; dy < k; ++dy) {
                for (std::size_t dx = 0; dx < k; ++dx) {
                    T acc{0};
                    for (std::size_t b = 0; b < B; ++b) {
                        const T* gc = g + ((b * O + o) * Mh) * Mw;
                        const T* xc = x + ((b * I + i) * H) * W;
                        for (std::size_t p = 0; p < Mh; ++p) {
                            const T* xrow = xc + (p * S + dy) * W + dx;
                            const T* grow = gc + p * Mw;
                            for (std::size_t q = 0; q < Mw; ++q) acc += grow[q] * xrow[q * S];
                        }
                    }
                    dwc[dy * k + dx] = acc;
                }
            }
        }
    }

    // Input gradient, gather form: every input position takes k^2 taps from
    // the (implicitly zero-padded, stride-upsampled) output gradient.
    if (compute_grad_input) {
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t i = 0; i < I; ++i) {
                if (input_mask && (*input_mask)[i]) continue;
                T* dxc = r.grad_input.data() + ((b * I + i) * H) * W;
                for (std::size_t o = 0; o < O; ++o) {
                    if (layer.filter_mask[o]) continue;
                    const T* gc = g + ((b * O + o) * Mh) * Mw;
                    const T* wc = w + ((o * I + i) * k) * k;
                    for (std::size_t y = 0; y < H; ++y) {
                        for (std::size_t xq = 0; xq < W; ++xq) {
                            T acc{0};
                            for (std::size_t dy = 0; dy < k; ++dy) {
                                for (std::size_t dx = 0; dx < k; ++dx) {
                                    T gv{0};
                                    if (y >= dy && xq >= dx) {
                                        std::size_t py = y - dy, px = xq - dx;
                                        if (py % S == 0 && px % S == 0) {
                                            std::size_t p = py / S, q = px / S;
                                            if (p < Mh && q < Mw) gv = gc[p * Mw + q];
                                        }
                                    }
                                    acc += wc[dy * k + dx] * gv;
                                }
                            }
                            dxc[y * W + xq] += acc;
                        }
                    }
                }
            }
        }
    }

    if (counters) {
        if (compute_grad_input)
            counters->error_macs += static_cast<std::uint64_t>(B) * H * W * k * k * in_eff * o_eff;
        std::uint64_t uh = ((H - Mh) % S == 0) ? (H - Mh) / S + 1 : k;
        std::uint64_t uw = ((W - Mw) % S == 0) ? (W - Mw) / S + 1 : k;
        counters->weight_grad_macs += static_cast<std::uint64_t>(B) * Mh * Mw * uh * uw * in_eff * o_eff;
    }

    ensure_finite(r.grad_input, "conv2d_backward grad_input");
    ensure_finite(r.grad_weights, "conv2d_backward grad_weights");
    ensure_finite(r.grad_bias, "conv2d_backward grad_bias");
    return r;
}

template <typename T>
struct BatchNormForwardResult {
    Tensor<T> output;
    Tensor<T> normalized;          // saved for backward
    std::vector<double> inv_std;   // per channel
};

// Training-mode batch normalization over [B,C,H,W] with per-channel batch
// statistics. Running statistics are updated in place with the given
// momentum (unbiased variance when the per-channel count allows it). Masked
// channels produce exact zeros and their running statistics stay frozen.
template <typename T>
BatchNormForwardResult<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                                            Tensor<T>& running_mean, Tensor<T>& running_var,
                                            const FilterMask* mask = nullptr, double momentum = 0.1,
                                            double eps = 1e-5) {
    if (input.ndim() != 4) throw std::invalid_argument("batchnorm_forward: input must be 4-d");
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C)
        throw std::invalid_argument("batchnorm_forward: parameter length mismatch");

    BatchNormForwardResult<T> r;
    r.output = Tensor<T>({B, C, H, W});
    r.normalized = Tensor<T>({B, C, H, W});
    r.inv_std.assign(C, 0.0);

    const std::size_t plane = H * W;
    const double n = static_cast<double>(B * plane);
    for (std::size_t c = 0; c < C; ++c) {
        if (mask && (*mask)[c]) continue;
        double sum = 0.0, sq = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const T* zc = input.data() + ((b * C + c) * plane);
            for (std::size_t p = 0; p < plane; ++p) {
                double v = static_cast<double>(zc[p]);
                sum += v;
                sq += v * v;
            }
        }
        double mean = sum / n;
        double var = sq / n - mean * mean;
        if (var < 0.0) var = 0.0;
        double inv = 1.0 / std::sqrt(var + eps);
        r.inv_std[c] = inv;

        double g = static_cast<double>(gamma[c]), be = static_cast<double>(beta[c]);
        for (std::size_t b = 0; b < B; ++b) {
            const T* zc = input.data() + ((b * C + c) * plane);
            T* xc = r.normalized.data() + ((b * C + c) * plane);
            T* yc = r.output.data() + ((b * C + c) * plane);
            for (std::size_t p = 0; p < plane; ++p) {
                double xh = (static_cast<double>(zc[p]) - mean) * inv;
                xc[p] = static_cast<T>(xh);
                yc[p] = static_cast<T>(g * xh + be);
            }
        }

        double var_running = (n > 1.0) ? var * n / (n - 1.0) : var;
        running_mean[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(running_mean[c]) + momentum * mean);
        running_var[c] = static_cast<T>((1.0 - momentum) * static_cast<double>(running_var[c]) + momentum * var_running);
    }
    ensure_finite(r.output, "batchnorm_forward");
    return r;
}

// Inference-mode batch normalization using running statistics.
template <typename T>
Tensor<T> batchnorm_eval_forward(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                                 const Tensor<T>& running_mean, const Tensor<T>& running_var,
                                 const FilterMask* mask = nullptr, double eps = 1e-5) {
    if (input.ndim() != 4) throw std::invalid_argument("batchnorm_eval_forward: input must be 4-d");
    const std::size_t B = input.dim(0), C = input.dim(1), plane = input.dim(2) * input.dim(3);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C || running_var.numel() != C)
        throw std::invalid_argument("batchnorm_eval_forward: parameter length mismatch");
    Tensor<T> out(input.shape());
    for (std::size_t c = 0; c < C; ++c) {
        if (mask && (*mask)[c]) continue;
        double inv = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
        double m = static_cast<double>(running_mean[c]);
        double g = static_cast<double>(gamma[c]), be = static_cast<double>(beta[c]);
        for (std::size_t b = 0; b < B; ++b) {
            const T* zc = input.data() + ((b * C + c) * plane);
            T* yc = out.data() + ((b * C + c) * plane);
            for (std::size_t p = 0; p < plane; ++p)
                yc[p] = static_cast<T>(g * ((static_cast<double>(zc[p]) - m) * inv) + be);
        }
    }
    ensure_finite(out, "batchnorm_eval_forward");
    return out;
}

template <typename T>
struct BatchNormBackwardResult {
    Tensor<T> grad_input;
    Tensor<T> grad_gamma;
    Tensor<T> grad_beta;
};

template <typename T>
BatchNormBackwardResult<T> batchnorm_backward(const Tensor<T>& grad_out, const Tensor<T>& normalized,
                                              const std::vector<double>& inv_std, const Tensor<T>& gamma,
                                              const FilterMask* mask = nullptr) {
    if (grad_out.shape() != normalized.shape())
        throw std::invalid_argument("batchnorm_backward: shape mismatch");
    const std::size_t B = grad_out.dim(0), C = grad_out.dim(1), plane = grad_out.dim(2) * grad_out.dim(3);
    if (inv_std.size() != C || gamma.numel() != C)
        throw std::invalid_argument("batchnorm_backward: parameter length mismatch");

    BatchNormBackwardResult<T> r;
    r.grad_input = Tensor<T>(grad_out.shape());
    r.grad_gamma = Tensor<T>({C});
    r.grad_beta = Tensor<T>({C});

    const double n = static_cast<double>(B * plane);
    for (std::size_t c = 0; c < C; ++c) {
        if (mask && (*mask)[c]) continue;
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const T* gc = grad_out.data() + ((b * C + c) * plane);
            const T* xc = normalized.data() + ((b * C + c) * plane);
            for (std::size_t p = 0; p < plane; ++p) {
                sum_g += static_cast<double>(gc[p]);
                sum_gx += static_cast<double>(gc[p]) * static_cast<double>(xc[p]);
            }
        }
        r.grad_beta[c] = static_cast<T>(sum_g);
        r.grad_gamma[c] = static_cast<T>(sum_gx);

        double scale = static_cast<double>(gamma[c]) * inv_std[c];
        double mg = sum_g / n, mgx = sum_gx / n;
        for (std::size_t b = 0; b < B; ++b) {
            const T* gc = grad_out.data() + ((b * C + c) * plane);
            const T* xc = normalized.data() + ((b * C + c) * plane);
            T* dc = r.grad_input.data() + ((b * C + c) * plane);
            for (std::size_t p = 0; p < plane; ++p)
                dc[p] = static_cast<T>(scale * (static_cast<double>(gc[p]) - mg -
                                                static_cast<double>(xc[p]) * mgx));
        }
    }
    ensure_finite(r.grad_input, "batchnorm_backward");
    return r;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
    ensure_finite(out, "relu_forward");
    return out;
}

// Gradient is zeroed wherever the forward input was <= 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    if (input.shape() != grad_out.shape()) throw std::invalid_argument("relu_backward: shape mismatch");
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T{0} ? grad_out[i] : T{0};
    ensure_finite(out, "relu_backward");
    return out;
}

template <typename T>
struct MaxPoolResult {
    Tensor<T> output;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
MaxPoolResult<T> maxpool2x2_forward(const Tensor<T>& input) {
    if (input.ndim() != 4) throw std::invalid_argument("maxpool2x2_forward: input must be 4-d");
    const std::size_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("maxpool2x2_forward: spatial dims must be even, got " + shape_str(input.shape()));
    MaxPoolResult<T> r;
    r.output = Tensor<T>({B, C, H / 2, W / 2});
    r.argmax.assign(r.output.numel(), 0);
    std::size_t oi = 0;
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* xc = input.data() + ((b * C + c) * H) * W;
            for (std::size_t p = 0; p < H; p += 2) {
                for (std::size_t q = 0; q < W; q += 2) {
                    std::size_t best = p * W + q;
                    T bv = xc[best];
                    const std::size_t cands[3] = {p * W + q + 1, (p + 1) * W + q, (p + 1) * W + q + 1};
                    for (std::size_t idx : cands) {
                        if (xc[idx] > bv) {
                            bv = xc[idx];
                            best = idx;
                        }
                    }
                    r.output[oi] = bv;
                    r.argmax[oi] = static_cast<std::uint32_t>(((b * C + c) * H) * W + best);
                    ++oi;
                }
            }
        }
    }
    ensure_finite(r.output, "maxpool2x2_forward");
    return r;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                              const Tensor<T>& grad_out) {
    if (argmax.size() != grad_out.numel())
        throw std::invalid_argument("maxpool2x2_backward: argmax/grad_out size mismatch");
    Tensor<T> grad_in(input_shape);
    for (std::size_t i = 0; i < grad_out.numel(); ++i) grad_in[argmax[i]] += grad_out[i];
    ensure_finite(grad_in, "maxpool2x2_backward");
    return grad_in;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const LinearLayerState<T>& layer) {
    if (input.ndim() != 2) throw std::invalid_argument("linear_forward: input must be 2-d");
    const std::size_t B = input.dim(0), F = input.dim(1);
    if (F != static_cast<std::size_t>(layer.in_features))
        throw std::invalid_argument("linear_forward: feature mismatch: input " + shape_str(input.shape()) +
                                    ", layer expects " + std::to_string(layer.in_features));
    const std::size_t Out = static_cast<std::size_t>(layer.out_features);
    Tensor<T> out({B, Out});
    for (std::size_t b = 0; b < B; ++b) {
        const T* xb = input.data() + b * F;
        for (std::size_t j = 0; j < Out; ++j) {
            const T* wj = layer.weights.data() + j * F;
            T acc = layer.bias[j];
            for (std::size_t i = 0; i < F; ++i) acc += wj[i] * xb[i];
            out[b * Out + j] = acc;
        }
    }
    ensure_finite(out, "linear_forward");
    return out;
}

template <typename T>
struct LinearBackwardResult {
    Tensor<T> grad_input;
    Tensor<T> grad_weights;
    Tensor<T> grad_bias;
};

template <typename T>
LinearBackwardResult<T> linear_backward(const Tensor<T>& input, const LinearLayerState<T>& layer,
                                        const Tensor<T>& grad_out) {
    const std::size_t B = input.dim(0), F = input.dim(1);
    const std::size_t Out = static_cast<std::size_t>(layer.out_features);
    if (grad_out.shape() != Shape{B, Out})
        throw std::invalid_argument("linear_backward: grad_out shape mismatch");
    LinearBackwardResult<T> r;
    r.grad_input = Tensor<T>({B, F});
    r.grad_weights = Tensor<T>(layer.weights.shape());
    r.grad_bias = Tensor<T>(layer.bias.shape());
    for (std::size_t b = 0; b < B; ++b) {
        const T* xb = input.data() + b * F;
        const T* gb = grad_out.data() + b * Out;
        T* dxb = r.grad_input.data() + b * F;
        for (std::size_t j = 0; j < Out; ++j) {
            const T g = gb[j];
            r.grad_bias[j] += g;
            const T* wj = layer.weights.data() + j * F;
            T* dwj = r.grad_weights.data() + j * F;
            for (std::size_t i = 0; i < F; ++i) {
                dwj[i] += g * xb[i];
                dxb[i] += wj[i] * g;
            }
        }
    }
    ensure_finite(r.grad_input, "linear_backward");
    return r;
}

template <typename T>
struct SoftmaxCrossEntropyResult {
    double loss = 0.0;          // mean over the batch
    Tensor<T> grad_logits;      // includes the 1/B factor
};

template <typename T>
SoftmaxCrossEntropyResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) throw std::invalid_argument("softmax_cross_entropy: logits must be 2-d");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    if (B == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
    if (labels.size() != B) throw std::invalid_argument("softmax_cross_entropy: label count mismatch");

    SoftmaxCrossEntropyResult<T> r;
    r.grad_logits = Tensor<T>({B, C});
    double total = 0.0;
    std::vector<double> p(C);
    for (std::size_t b = 0; b < B; ++b) {
        int label = labels[b];
        if (label < 0 || static_cast<std::size_t>(label) >= C)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) + " out of range");
        const T* lb = logits.data() + b * C;
        double mx = static_cast<double>(lb[0]);
        for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, static_cast<double>(lb[c]));
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            p[c] = std::exp(static_cast<double>(lb[c]) - mx);
            z += p[c];
        }
        total += -(static_cast<double>(lb[label]) - mx - std::log(z));
        for (std::size_t c = 0; c < C; ++c) {
            double grad = p[c] / z - (static_cast<int>(c) == label ? 1.0 : 0.0);
            r.grad_logits[b * C + c] = static_cast<T>(grad / static_cast<double>(B));
        }
    }
    r.loss = total / static_cast<double>(B);
    if (!std::isfinite(r.loss)) throw std::runtime_error("softmax_cross_entropy: non-finite loss");
    ensure_finite(r.grad_logits, "softmax_cross_entropy");
    return r;
}

}  // namespace pwt
