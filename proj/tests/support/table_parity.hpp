#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "pwt/costmodel.hpp"
#include "pwt/kernels.hpp"
#include "pwt/layers.hpp"

// Randomized comparison between the analytic per-layer op model and the
// instrumented kernel counters. Geometries are sampled so that the model's
// derived quantities are exact integers and the tested pruning percentages
// land on whole channel counts (channel counts are multiples of 4).

namespace testsupport {

struct ParityOutcome {
    int geometries = 0;
    int comparisons = 0;
    bool forward_exact = true;
    bool error_exact = true;
    bool dw_exact_when_curr_dense = true;
    bool dw_bounded_when_curr_pruned = true;
    std::string first_failure;
};

inline ParityOutcome run_table_parity(int num_geometries, std::uint64_t seed, bool log = false) {
    ParityOutcome out;
    pwt::Rng rng(pwt::mix_seed(seed, 0x7ab1e));
    const double percents[3] = {0.0, 25.0, 50.0};

    while (out.geometries < num_geometries) {
        int k = 1 + 2 * static_cast<int>(rng.bounded(3));  // 1, 3, 5
        int stride = 1 + static_cast<int>(rng.bounded(2));
        int m;
        if (stride == 2) {
            m = rng.bounded(2) == 0 ? 1 : 3;  // keeps the update window integral
        } else {
            m = 1 + static_cast<int>(rng.bounded(4));
        }
        int n = stride * (m - 1) + k;
        if (n > 12) continue;
        int in_ch = 4 * (1 + static_cast<int>(rng.bounded(2)));
        int out_ch = 4 * (1 + static_cast<int>(rng.bounded(2)));
        int batch = 1 + static_cast<int>(rng.bounded(2));

        auto geom = pwt::cost::LayerGeometry::make(n, k, in_ch, out_ch, stride);
        ++out.geometries;

        for (double pp : percents) {
            for (double pc : percents) {
                pwt::Rng init(rng.next_u64());
                auto layer = pwt::make_conv_layer<double>(in_ch, out_ch, k, stride, init);
                int masked_out = static_cast<int>(pc * out_ch / 100.0);
                for (int o = 0; o < masked_out; ++o) layer.filter_mask[static_cast<std::size_t>(o)] = 1;
                pwt::FilterMask in_mask(static_cast<std::size_t>(in_ch), 0);
                int masked_in = static_cast<int>(pp * in_ch / 100.0);
                for (int i = 0; i < masked_in; ++i) in_mask[static_cast<std::size_t>(i)] = 1;

                pwt::Tensor<double> x(
                    {(std::size_t)batch, (std::size_t)in_ch, (std::size_t)n, (std::size_t)n});
                for (std::size_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();

                pwt::ConvCounters counters;
                auto y = pwt::conv2d_forward(x, layer, stride, &in_mask, &counters);
                pwt::Tensor<double> g(y.shape());
                for (std::size_t i = 0; i < g.numel(); ++i) g[i] = rng.normal();
                pwt::conv2d_backward(x, layer, g, stride, &in_mask, &counters);

                auto analytic = pwt::cost::layer_costs(geom, {pp, pc}, static_cast<std::uint64_t>(batch));
                ++out.comparisons;

                auto record = [&](bool& flag, const char* what, double a, double inst) {
                    if (a != inst) {
                        flag = false;
                        if (out.first_failure.empty()) {
                            char buf[256];
                            std::snprintf(buf, sizeof(buf),
                                          "%s mismatch: n=%d k=%d s=%d i=%d o=%d pp=%g pc=%g analytic=%.0f "
                                          "instrumented=%.0f",
                                          what, n, k, stride, in_ch, out_ch, pp, pc, a, inst);
                            out.first_failure = buf;
                        }
                    }
                };

                record(out.forward_exact, "forward", analytic.forward_macs,
                       static_cast<double>(counters.forward_macs));
                record(out.error_exact, "error", analytic.error_macs, static_cast<double>(counters.error_macs));
                if (pc == 0.0) {
                    record(out.dw_exact_when_curr_dense, "weight-grad", analytic.weight_grad_macs,
                           static_cast<double>(counters.weight_grad_macs));
                } else {
                    // the model scales the weight-gradient pass by the
                    // upstream percentage only; the engine also skips the
                    // current layer's masked filters
                    double expected = analytic.weight_grad_macs * (100.0 - pc) / 100.0;
                    bool le = static_cast<double>(counters.weight_grad_macs) <= analytic.weight_grad_macs;
                    bool eq = static_cast<double>(counters.weight_grad_macs) == expected;
                    if (!le || !eq) {
                        out.dw_bounded_when_curr_pruned = false;
                        if (out.first_failure.empty()) out.first_failure = "weight-grad bound violated";
                    }
                    if (log)
                        std::printf("  dw divergence (documented): analytic=%.0f instrumented=%llu (pc=%g%%)\n",
                                    analytic.weight_grad_macs,
                                    static_cast<unsigned long long>(counters.weight_grad_macs), pc);
                }
            }
        }
    }
    return out;
}

}  // namespace testsupport
