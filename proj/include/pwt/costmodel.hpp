#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pwt/network.hpp"
#include "pwt/pruning.hpp"

// Analytic per-layer op model for conv layers: multiply-accumulates of the
// forward, error-propagation and weight-gradient passes plus memory
// accesses, each scaled by the pruned percentage of the current layer (P_c)
// and of the layer upstream (P_p). Counts are per image unless a batch
// factor is supplied. Savings and latency projections compare
// pruning-while-training against train-then-prune-then-retrain.

namespace pwt::cost {

struct LayerGeometry {
    int input_side = 0;
    int kernel_side = 0;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    int output_side = 0;         // (input_side - kernel_side) / stride + 1
    int update_window_side = 0;  // (input_side - output_side) / stride + 1

    // Validates the geometry and derives the output and update-window sides;
    // both divisions must be exact.
    static LayerGeometry make(int input_side, int kernel_side, int in_channels, int out_channels, int stride);
};

struct LayerPruning {
    double prev_pruned_percent = 0.0;
    double curr_pruned_percent = 0.0;
};

struct OpCounts {
    double forward_macs = 0;
    double error_macs = 0;
    double weight_grad_macs = 0;
    double input_reads = 0;
    double weight_reads = 0;
    double activation_writes = 0;
    double weight_writes = 0;

    double total_macs() const { return forward_macs + error_macs + weight_grad_macs; }

    OpCounts& operator+=(const OpCounts& o);
};

OpCounts layer_costs(const LayerGeometry& g, const LayerPruning& p, std::uint64_t batch = 1);

struct CostReport {
    std::vector<OpCounts> per_layer;
    OpCounts totals;
};

CostReport network_costs(const std::vector<LayerGeometry>& geoms, const std::vector<LayerPruning>& pruning,
                         std::uint64_t batch = 1);

// Training-cost savings of gradual pruning (one percent of filters per
// epoch baked into the numerator) over dense training plus retraining a
// network pruned to target_rate. ops_per_epoch cancels algebraically.
struct SavingsParams {
    int train_epochs = 0;
    int retrain_epochs = 0;
    double target_rate = 0.0;      // fraction in [0,1)
    double ops_per_epoch = 1.0;
};

double savings(const SavingsParams& p);

// Same ratio for an arbitrary schedule: live_fraction_per_epoch[k] is the
// fraction of the dense per-epoch work still executed during epoch k+1.
double savings_general(const std::vector<double>& live_fraction_per_epoch, int retrain_epochs, double target_rate,
                       double ops_per_epoch = 1.0);

struct LatencyParams {
    double train_epochs = 0;
    double retrain_epochs = 0;
    double batches_per_epoch = 0;
    double batch_seconds = 0;
    double scan_seconds = 0;  // per-epoch filter-norm scan
};

double latency_pwt(const LatencyParams& p);
double latency_prt(const LatencyParams& p);

namespace detail {

template <typename F>
double median_block_seconds(F&& block, int repetitions) {
    using clock = std::chrono::steady_clock;
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(repetitions));
    for (int r = 0; r < repetitions; ++r) {
        auto t0 = clock::now();
        block();
        auto t1 = clock::now();
        samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

}  // namespace detail

// Median wall-clock seconds of one full per-filter L1 scan over the network,
// over at least five repetitions. Inner repetition keeps each timed block
// long enough to be resolvable.
template <typename T>
double measure_l1_scan_seconds(const Network<T>& net, int repetitions = 7) {
    repetitions = std::max(repetitions, 5);
    volatile double sink = 0.0;
    auto scan_once = [&] {
        double s = 0.0;
        for (const auto& l : net.conv_layers()) {
            auto norms = l1_norm_per_filter(l);
            for (double v : norms) s += v;
        }
        sink = sink + s;
    };
    // calibrate an inner count so one block takes roughly a millisecond
    std::uint64_t inner = 1;
    for (; inner < (1ull << 22); inner *= 2) {
        auto t0 = std::chrono::steady_clock::now();
        for (std::uint64_t i = 0; i < inner; ++i) scan_once();
        double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (el > 1e-3) break;
    }
    double block = detail::median_block_seconds(
        [&] {
            for (std::uint64_t i = 0; i < inner; ++i) scan_once();
        },
        repetitions);
    return block / static_cast<double>(inner);
}

// Median wall-clock seconds of one inference-mode forward pass of `batch`.
template <typename T>
double measure_batch_forward_seconds(const Network<T>& net, const Tensor<T>& batch, int repetitions = 7) {
    repetitions = std::max(repetitions, 5);
    volatile double sink = 0.0;
    return detail::median_block_seconds(
        [&] {
            Tensor<T> out = net.forward_eval(batch);
            sink = sink + static_cast<double>(out[0]);
        },
        repetitions);
}

struct TimingProbe {
    double l1_scan_seconds = 0.0;
    double batch_forward_seconds = 0.0;
    bool has_conv_layers = false;
    bool scan_faster_than_forward = false;
};

template <typename T>
TimingProbe run_timing_probe(const Network<T>& net, const Tensor<T>& batch) {
    TimingProbe p;
    p.has_conv_layers = !net.conv_layers().empty();
    p.l1_scan_seconds = measure_l1_scan_seconds(net);
    p.batch_forward_seconds = measure_batch_forward_seconds(net, batch);
    p.scan_faster_than_forward = p.l1_scan_seconds < p.batch_forward_seconds;
    return p;
}

}  // namespace pwt::cost
