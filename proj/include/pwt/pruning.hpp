#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pwt/network.hpp"

// Per-filter significance scores and mask application. Sparsification is
// monotone: filters are only ever masked, never restored, and double-masking
// is rejected.

namespace pwt {

enum class PruneCriterion { L1Norm, MeanActivation, Random };
enum class L1Scope { Global, PerLayer };

struct FilterRef {
    int layer = 0;   // conv layer index
    int filter = 0;  // output channel within that layer

    bool operator==(const FilterRef&) const = default;
};

struct VictimConstraints {
    int min_filters_per_layer = 1;
};

// Sum of absolute weights per filter; masked filters report exactly 0.
template <typename T>
std::vector<double> l1_norm_per_filter(const ConvLayerState<T>& layer) {
    std::vector<double> norms(static_cast<std::size_t>(layer.out_channels), 0.0);
    const std::size_t per = layer.weights_per_filter();
    for (std::size_t o = 0; o < norms.size(); ++o) {
        if (layer.filter_mask[o]) continue;
        const T* w = layer.weights.data() + o * per;
        double s = 0.0;
        for (std::size_t i = 0; i < per; ++i) s += std::abs(static_cast<double>(w[i]));
        norms[o] = s;
    }
    return norms;
}

// Per-channel mean output activation over the images seen this epoch.
// Masked channels score 0.
template <typename T>
std::vector<std::vector<double>> mean_activation_scores(const ActivationAccumulator<T>& acc,
                                                        const Network<T>& net) {
    if (acc.images_seen() == 0)
        throw std::invalid_argument("mean_activation_scores: no images accumulated this epoch");
    if (acc.layer_count() != net.conv_layers().size())
        throw std::invalid_argument("mean_activation_scores: accumulator does not match network");
    std::vector<std::vector<double>> scores = acc.channel_sums();
    const double n = static_cast<double>(acc.images_seen());
    for (std::size_t li = 0; li < scores.size(); ++li) {
        const FilterMask& mask = net.conv_layers()[li].filter_mask;
        for (std::size_t c = 0; c < scores[li].size(); ++c) scores[li][c] = mask[c] ? 0.0 : scores[li][c] / n;
    }
    return scores;
}

namespace detail {

template <typename T>
std::vector<int> unmasked_counts(const Network<T>& net) {
    std::vector<int> counts;
    for (const auto& l : net.conv_layers()) {
        int c = 0;
        for (auto m : l.filter_mask) c += (m == 0);
        counts.push_back(c);
    }
    return counts;
}

}  // namespace detail

// Picks the `count` lowest-scoring unmasked filters ranked across all conv
// layers, ties broken by lowest layer index then lowest filter index. Layers
// are never drained below the per-layer floor within one selection.
template <typename T>
std::vector<FilterRef> select_victims_l1(const Network<T>& net, int count, const VictimConstraints& cons = {},
                                         L1Scope scope = L1Scope::Global) {
    if (count < 0) throw std::invalid_argument("select_victims_l1: negative count");
    std::vector<int> remaining = detail::unmasked_counts(net);

    if (scope == L1Scope::PerLayer) {
        // One lowest-norm filter from each layer that still has headroom;
        // count is ignored in this scope.
        std::vector<FilterRef> victims;
        for (std::size_t li = 0; li < net.conv_layers().size(); ++li) {
            if (remaining[li] <= cons.min_filters_per_layer) continue;
            auto norms = l1_norm_per_filter(net.conv_layers()[li]);
            const FilterMask& mask = net.conv_layers()[li].filter_mask;
            int best = -1;
            for (std::size_t o = 0; o < norms.size(); ++o) {
                if (mask[o]) continue;
                if (best < 0 || norms[o] < norms[static_cast<std::size_t>(best)]) best = static_cast<int>(o);
            }
            if (best >= 0) victims.push_back({static_cast<int>(li), best});
        }
        if (victims.empty())
            throw std::runtime_error("select_victims_l1: no layer can spare a filter");
        return victims;
    }

    struct Entry {
        double score;
        int layer;
        int filter;
    };
    std::vector<Entry> entries;
    for (std::size_t li = 0; li < net.conv_layers().size(); ++li) {
        auto norms = l1_norm_per_filter(net.conv_layers()[li]);
        const FilterMask& mask = net.conv_layers()[li].filter_mask;
        for (std::size_t o = 0; o < norms.size(); ++o)
            if (!mask[o]) entries.push_back({norms[o], static_cast<int>(li), static_cast<int>(o)});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.filter < b.filter;
    });

    std::vector<FilterRef> victims;
    for (const Entry& e : entries) {
        if (static_cast<int>(victims.size()) == count) break;
        if (remaining[static_cast<std::size_t>(e.layer)] <= cons.min_filters_per_layer) continue;
        victims.push_back({e.layer, e.filter});
        --remaining[static_cast<std::size_t>(e.layer)];
    }
    if (static_cast<int>(victims.size()) < count)
        throw std::runtime_error("select_victims_l1: cannot pick " + std::to_string(count) +
                                 " filters without dropping a layer below its floor of " +
                                 std::to_string(cons.min_filters_per_layer));
    return victims;
}

// One lowest-mean-activation unmasked filter per conv layer, skipping layers
// already at the floor. Errors only when no layer can give a victim.
template <typename T>
std::vector<FilterRef> select_victims_mean_activation(const Network<T>& net, const ActivationAccumulator<T>& acc,
                                                      const VictimConstraints& cons = {}) {
    auto scores = mean_activation_scores(acc, net);
    std::vector<int> remaining = detail::unmasked_counts(net);
    std::vector<FilterRef> victims;
    for (std::size_t li = 0; li < scores.size(); ++li) {
        if (remaining[li] <= cons.min_filters_per_layer) continue;
        const FilterMask& mask = net.conv_layers()[li].filter_mask;
        int best = -1;
        for (std::size_t o = 0; o < scores[li].size(); ++o) {
            if (mask[o]) continue;
            if (best < 0 || scores[li][o] < scores[li][static_cast<std::size_t>(best)]) best = static_cast<int>(o);
        }
        if (best >= 0) victims.push_back({static_cast<int>(li), best});
    }
    if (victims.empty())
        throw std::runtime_error("select_victims_mean_activation: no layer can spare a filter");
    return victims;
}

// Uniform draws from one seeded generator, layer first then filter, with
// rejection of masked filters and layers at the floor.
template <typename T>
std::vector<FilterRef> select_victims_random(const Network<T>& net, Rng& rng, int count,
                                             const VictimConstraints& cons = {}) {
    if (count < 0) throw std::invalid_argument("select_victims_random: negative count");
    std::vector<int> remaining = detail::unmasked_counts(net);
    const auto& layers = net.conv_layers();

    std::vector<FilterRef> victims;
    std::vector<FilterMask> tentative;
    for (const auto& l : layers) tentative.push_back(l.filter_mask);

    for (int picked = 0; picked < count; ++picked) {
        bool any = false;
        for (std::size_t li = 0; li < layers.size(); ++li)
            if (remaining[li] > cons.min_filters_per_layer) any = true;
        if (!any)
            throw std::runtime_error("select_victims_random: no unmasked filters remain above the per-layer floor");
        for (;;) {
            std::size_t li = static_cast<std::size_t>(rng.bounded(layers.size()));
            if (remaining[li] <= cons.min_filters_per_layer) continue;
            std::size_t o = static_cast<std::size_t>(rng.bounded(static_cast<std::uint64_t>(layers[li].out_channels)));
            if (tentative[li][o]) continue;
            tentative[li][o] = 1;
            --remaining[li];
            victims.push_back({static_cast<int>(li), static_cast<int>(o)});
            break;
        }
    }
    return victims;
}

// Masks each victim: sets the flag, zeroes weights, bias and batch-norm
// gamma/beta, and zeroes the Adam moments so the filter is frozen for good.
template <typename T>
void apply_mask(Network<T>& net, const std::vector<FilterRef>& victims) {
    auto& layers = net.conv_layers();
    for (const FilterRef& v : victims) {
        if (v.layer < 0 || static_cast<std::size_t>(v.layer) >= layers.size())
            throw std::invalid_argument("apply_mask: layer index out of range");
        ConvLayerState<T>& l = layers[static_cast<std::size_t>(v.layer)];
        if (v.filter < 0 || v.filter >= l.out_channels)
            throw std::invalid_argument("apply_mask: filter index out of range");
        std::size_t o = static_cast<std::size_t>(v.filter);
        if (l.filter_mask[o])
            throw std::invalid_argument("apply_mask: filter (" + std::to_string(v.layer) + "," +
                                        std::to_string(v.filter) + ") is already masked");
        l.filter_mask[o] = 1;

        const std::size_t per = l.weights_per_filter();
        for (std::size_t i = o * per; i < (o + 1) * per; ++i) {
            l.weights[i] = T{0};
            l.weights_mom.first[i] = T{0};
            l.weights_mom.second[i] = T{0};
        }
        l.bias[o] = T{0};
        l.bias_mom.first[o] = T{0};
        l.bias_mom.second[o] = T{0};
        l.bn_gamma[o] = T{0};
        l.gamma_mom.first[o] = T{0};
        l.gamma_mom.second[o] = T{0};
        l.bn_beta[o] = T{0};
        l.beta_mom.first[o] = T{0};
        l.beta_mom.second[o] = T{0};
    }
}

// 100 * (conv filters whose weights are entirely zero) / (total conv
// filters). Counts masked filters and spontaneously all-zero ones alike.
template <typename T>
double zero_filters_percentage(const Network<T>& net) {
    std::uint64_t zero = 0, total = 0;
    for (const auto& l : net.conv_layers()) {
        const std::size_t per = l.weights_per_filter();
        for (int o = 0; o < l.out_channels; ++o) {
            ++total;
            const T* w = l.weights.data() + static_cast<std::size_t>(o) * per;
            bool all_zero = true;
            for (std::size_t i = 0; i < per; ++i) {
                if (w[i] != T{0}) {
                    all_zero = false;
                    break;
                }
            }
            zero += all_zero;
        }
    }
    if (total == 0) return 0.0;
    return 100.0 * static_cast<double>(zero) / static_cast<double>(total);
}

}  // namespace pwt
