#pragma once

#include <algorithm>
#include <type_traits>
#include <stdexcept>
#include <string>

#include "pwt/pruning.hpp"

// Drives when and how much to prune. Pruning-while-training (PWT) masks a
// few filters at the end of every pruning epoch so the pruned percentage
// tracks a linearly growing target; prune-retrain (PRT) trains dense, prunes
// once to the target, and keeps training.

namespace pwt {

enum class ScheduleMode { None, Pwt, Prt };

struct ScheduleConfig {
    ScheduleMode mode = ScheduleMode::None;
    PruneCriterion criterion = PruneCriterion::L1Norm;
    double initial_prune_perc = 0.0;   // percent
    double rate_per_epoch = 1.0;       // percent per pruning epoch
    double target_prune_perc = 0.0;    // percent, cap for the whole run
    int mod_k = 1;                     // prune on epochs divisible by mod_k
    bool advance_target_on_skip = false;
    int prt_prune_epoch = 0;           // PRT only
    int total_epochs = 0;
    int min_filters_per_layer = 1;
    L1Scope l1_scope = L1Scope::Global;
};

struct ScheduleState {
    double current_target_perc = 0.0;
    double current_prune_perc = 0.0;
    int epoch = 0;
};

inline ScheduleState init_schedule_state(const ScheduleConfig& cfg) {
    return ScheduleState{cfg.initial_prune_perc, 0.0, 0};
}

inline int pruning_epochs_through(const ScheduleConfig& cfg, int epoch) {
    if (cfg.mode != ScheduleMode::Pwt) return 0;
    return cfg.advance_target_on_skip ? epoch : epoch / std::max(1, cfg.mod_k);
}

// Piecewise-linear pruning target after `epoch` epochs: the initial
// percentage plus the per-event rate times the pruning events elapsed,
// clamped at the overall target.
inline double target_for_epoch(const ScheduleConfig& cfg, int epoch) {
    if (epoch < 1 || (cfg.total_epochs > 0 && epoch > cfg.total_epochs))
        throw std::invalid_argument("target_for_epoch: epoch out of range");
    if (cfg.mode != ScheduleMode::Pwt) return 0.0;
    double t = cfg.initial_prune_perc + cfg.rate_per_epoch * pruning_epochs_through(cfg, epoch);
    return std::min(t, cfg.target_prune_perc);
}

inline void validate_schedule(const ScheduleConfig& cfg) {
    if (cfg.total_epochs < 1) throw std::invalid_argument("schedule: total_epochs must be >= 1");
    if (cfg.min_filters_per_layer < 0) throw std::invalid_argument("schedule: min_filters_per_layer must be >= 0");
    if (cfg.mode == ScheduleMode::Pwt) {
        if (cfg.rate_per_epoch <= 0.0) throw std::invalid_argument("schedule: rate_per_epoch must be > 0");
        if (cfg.initial_prune_perc < 0.0) throw std::invalid_argument("schedule: initial_prune_perc must be >= 0");
        if (cfg.target_prune_perc < 0.0 || cfg.target_prune_perc >= 100.0)
            throw std::invalid_argument("schedule: target_prune_perc must be in [0,100)");
        if (cfg.mod_k < 1) throw std::invalid_argument("schedule: mod_k must be >= 1");
        if (cfg.criterion != PruneCriterion::MeanActivation) {
            double reach = cfg.initial_prune_perc +
                           cfg.rate_per_epoch * pruning_epochs_through(cfg, cfg.total_epochs);
            if (reach + 1e-9 < cfg.target_prune_perc)
                throw std::invalid_argument("schedule: target_prune_perc is not reachable by total_epochs");
        }
    } else if (cfg.mode == ScheduleMode::Prt) {
        if (cfg.target_prune_perc < 0.0 || cfg.target_prune_perc >= 100.0)
            throw std::invalid_argument("schedule: target_prune_perc must be in [0,100)");
        if (cfg.prt_prune_epoch <= 0 || cfg.prt_prune_epoch >= cfg.total_epochs)
            throw std::invalid_argument("schedule: prt_prune_epoch must satisfy 0 < epoch < total_epochs");
    }
}

namespace detail {

// Masks globally-lowest-L1 filters one at a time, recomputing norms after
// each mask, until the zero-filter percentage reaches `target`. Stops at the
// first percentage >= target, so the overshoot is below one filter's worth.
template <typename T>
void prune_l1_to_target(Network<T>& net, double target, const VictimConstraints& cons, L1Scope scope) {
    while (zero_filters_percentage(net) < target) {
        if (scope == L1Scope::PerLayer) {
            apply_mask(net, select_victims_l1(net, 0, cons, scope));
        } else {
            apply_mask(net, select_victims_l1(net, 1, cons, L1Scope::Global));
        }
    }
}

template <typename T>
void prune_random_to_target(Network<T>& net, double target, Rng& rng, const VictimConstraints& cons) {
    while (zero_filters_percentage(net) < target) apply_mask(net, select_victims_random(net, rng, 1, cons));
}

}  // namespace detail

// One-shot prune from the current level up to the overall target using the
// L1 criterion; the remaining epochs retrain the survivors with their
// optimizer moments intact.
template <typename T>
void prt_prune_event(Network<T>& net, const ScheduleConfig& cfg, ScheduleState& state) {
    double current = zero_filters_percentage(net);
    if (cfg.target_prune_perc < current)
        throw std::runtime_error("prt_prune_event: target " + std::to_string(cfg.target_prune_perc) +
                                 "% is below the current pruned percentage " + std::to_string(current) + "%");
    VictimConstraints cons{cfg.min_filters_per_layer};
    detail::prune_l1_to_target(net, cfg.target_prune_perc, cons, L1Scope::Global);
    state.current_target_perc = cfg.target_prune_perc;
    state.current_prune_perc = zero_filters_percentage(net);
}

// Epoch-end hook, called once after the epoch's forward/backward/update
// work, with `epoch` 1-based. PWT pruning epochs advance the running target
// by rate_per_epoch and mask victims until the zero-filter percentage meets
// it (L1/Random) or mask one filter per layer (MeanActivation). Off-cycle
// epochs leave the network untouched; whether they advance the target is
// controlled by advance_target_on_skip.
template <typename T>
void epoch_end_hook(Network<T>& net, const ScheduleConfig& cfg, ScheduleState& state, int epoch,
                    const ActivationAccumulator<std::type_identity_t<T>>* acc = nullptr, Rng* rng = nullptr) {
    state.epoch = epoch;
    if (cfg.mode == ScheduleMode::None) {
        state.current_prune_perc = zero_filters_percentage(net);
        return;
    }
    if (cfg.mode == ScheduleMode::Prt) {
        if (epoch == cfg.prt_prune_epoch) prt_prune_event(net, cfg, state);
        state.current_prune_perc = zero_filters_percentage(net);
        return;
    }

    const bool pruning_epoch = (epoch % cfg.mod_k) == 0;
    if (pruning_epoch) {
        if (cfg.criterion == PruneCriterion::Random && !rng)
            throw std::invalid_argument("epoch_end_hook: random criterion needs a generator");
        if (cfg.criterion == PruneCriterion::MeanActivation && !acc)
            throw std::invalid_argument("epoch_end_hook: mean-activation criterion needs the accumulator");
    }
    if (pruning_epoch || cfg.advance_target_on_skip)
        state.current_target_perc =
            std::min(state.current_target_perc + cfg.rate_per_epoch, cfg.target_prune_perc);

    if (pruning_epoch) {
        VictimConstraints cons{cfg.min_filters_per_layer};
        switch (cfg.criterion) {
            case PruneCriterion::L1Norm:
                detail::prune_l1_to_target(net, state.current_target_perc, cons, cfg.l1_scope);
                break;
            case PruneCriterion::Random:
                detail::prune_random_to_target(net, state.current_target_perc, *rng, cons);
                break;
            case PruneCriterion::MeanActivation:
                apply_mask(net, select_victims_mean_activation(net, *acc, cons));
                break;
        }
    }
    state.current_prune_perc = zero_filters_percentage(net);
}

}  // namespace pwt
