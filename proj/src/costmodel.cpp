#include "pwt/costmodel.hpp"

#include <stdexcept>
#include <string>

namespace pwt::cost {

LayerGeometry LayerGeometry::make(int input_side, int kernel_side, int in_channels, int out_channels, int stride) {
    if (input_side <= 0 || kernel_side <= 0 || in_channels <= 0 || out_channels <= 0 || stride <= 0)
        throw std::invalid_argument("LayerGeometry: all dimensions must be positive");
    if (input_side < kernel_side)
        throw std::invalid_argument("LayerGeometry: input side " + std::to_string(input_side) +
                                    " smaller than kernel " + std::to_string(kernel_side));
    if ((input_side - kernel_side) % stride != 0)
        throw std::invalid_argument("LayerGeometry: non-integral output side for stride " + std::to_string(stride));
    LayerGeometry g;
    g.input_side = input_side;
    g.kernel_side = kernel_side;
    g.in_channels = in_channels;
    g.out_channels = out_channels;
    g.stride = stride;
    g.output_side = (input_side - kernel_side) / stride + 1;
    if ((input_side - g.output_side) % stride != 0)
        throw std::invalid_argument("LayerGeometry: non-integral update window for stride " + std::to_string(stride));
    g.update_window_side = (input_side - g.output_side) / stride + 1;
    return g;
}

OpCounts& OpCounts::operator+=(const OpCounts& o) {
    forward_macs += o.forward_macs;
    error_macs += o.error_macs;
    weight_grad_macs += o.weight_grad_macs;
    input_reads += o.input_reads;
    weight_reads += o.weight_reads;
    activation_writes += o.activation_writes;
    weight_writes += o.weight_writes;
    return *this;
}

OpCounts layer_costs(const LayerGeometry& g, const LayerPruning& p, std::uint64_t batch) {
    if (p.prev_pruned_percent < 0.0 || p.prev_pruned_percent > 100.0 || p.curr_pruned_percent < 0.0 ||
        p.curr_pruned_percent > 100.0)
        throw std::invalid_argument("layer_costs: pruned percentages must lie in [0,100]");

    const double live_prev = (100.0 - p.prev_pruned_percent) / 100.0;
    const double live_curr = (100.0 - p.curr_pruned_percent) / 100.0;
    const double n2 = static_cast<double>(g.input_side) * g.input_side;
    const double m2 = static_cast<double>(g.output_side) * g.output_side;
    const double k2 = static_cast<double>(g.kernel_side) * g.kernel_side;
    const double r2 = static_cast<double>(g.update_window_side) * g.update_window_side;
    const double io = static_cast<double>(g.in_channels) * g.out_channels;
    const double b = static_cast<double>(batch);

    OpCounts c;
    c.forward_macs = b * live_curr * live_prev * m2 * k2 * io;
    c.error_macs = b * live_curr * live_prev * n2 * k2 * io;
    c.weight_grad_macs = b * live_prev * m2 * r2 * io;  // the model scales this pass by P_p only
    c.input_reads = b * n2 * g.in_channels;
    c.weight_reads = b * live_curr * live_prev * k2 * io;
    c.activation_writes = b * live_prev * m2 * g.out_channels;
    c.weight_writes = b * live_curr * live_prev * k2 * io;
    return c;
}

CostReport network_costs(const std::vector<LayerGeometry>& geoms, const std::vector<LayerPruning>& pruning,
                         std::uint64_t batch) {
    if (geoms.size() != pruning.size())
        throw std::invalid_argument("network_costs: geometry/pruning length mismatch");
    CostReport r;
    for (std::size_t i = 0; i < geoms.size(); ++i) {
        r.per_layer.push_back(layer_costs(geoms[i], pruning[i], batch));
        r.totals += r.per_layer.back();
    }
    return r;
}

double savings(const SavingsParams& p) {
    if (p.train_epochs < 1) throw std::invalid_argument("savings: train_epochs must be >= 1");
    if (p.retrain_epochs < 0) throw std::invalid_argument("savings: retrain_epochs must be >= 0");
    if (p.target_rate < 0.0 || p.target_rate >= 1.0)
        throw std::invalid_argument("savings: target_rate must lie in [0,1)");
    if (p.ops_per_epoch <= 0.0) throw std::invalid_argument("savings: ops_per_epoch must be positive");

    double numer = 0.0;
    for (int k = 1; k <= p.train_epochs; ++k)
        numer += (100.0 - static_cast<double>(k) + 1.0) / 100.0 * p.ops_per_epoch;
    double denom = p.ops_per_epoch * p.train_epochs +
                   static_cast<double>(p.retrain_epochs) * (1.0 - p.target_rate) * p.ops_per_epoch;
    return 1.0 - numer / denom;
}

double savings_general(const std::vector<double>& live_fraction_per_epoch, int retrain_epochs, double target_rate,
                       double ops_per_epoch) {
    if (live_fraction_per_epoch.empty()) throw std::invalid_argument("savings_general: need at least one epoch");
    if (retrain_epochs < 0) throw std::invalid_argument("savings_general: retrain_epochs must be >= 0");
    if (target_rate < 0.0 || target_rate >= 1.0)
        throw std::invalid_argument("savings_general: target_rate must lie in [0,1)");
    if (ops_per_epoch <= 0.0) throw std::invalid_argument("savings_general: ops_per_epoch must be positive");

    double numer = 0.0;
    for (double f : live_fraction_per_epoch) numer += f * ops_per_epoch;
    double denom = ops_per_epoch * static_cast<double>(live_fraction_per_epoch.size()) +
                   static_cast<double>(retrain_epochs) * (1.0 - target_rate) * ops_per_epoch;
    return 1.0 - numer / denom;
}

double latency_pwt(const LatencyParams& p) {
    return p.train_epochs * (p.batches_per_epoch * p.batch_seconds + p.scan_seconds);
}

double latency_prt(const LatencyParams& p) {
    return p.train_epochs * p.batches_per_epoch * p.batch_seconds + p.scan_seconds +
           p.retrain_epochs * p.batches_per_epoch * p.batch_seconds;
}

}  // namespace pwt::cost
