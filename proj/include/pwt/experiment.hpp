#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pwt/checkpoint.hpp"
#include "pwt/costmodel.hpp"
#include "pwt/dataio.hpp"
#include "pwt/metrics.hpp"
#include "pwt/network.hpp"
#include "pwt/scheduler.hpp"

namespace pwt {

// Invalid configuration (bad JSON, unknown keys, out-of-range values).
// Reported with the offending field path and mapped to exit code 1 by the
// CLI; runtime failures map to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Precision { F32, F64 };
enum class DatasetKind { Blobs, Idx, Cifar10, Cifar100 };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::Blobs;
    // blobs
    int classes = 8;
    std::size_t train_count = 512;
    std::size_t test_count = 256;
    int side = 16;
    int channels = 1;
    std::uint64_t blob_seed = 1;
    // idx
    std::string train_images, train_labels, test_images, test_labels;
    // cifar
    std::vector<std::string> train_paths, test_paths;
};

struct RunConfig {
    Precision precision = Precision::F32;
    std::uint64_t seed = 1;
    int epochs = 10;
    int batch_size = 32;
    int threads = 1;
    int checkpoint_every = 10;
    bool record_timing = true;
    AdamHyper optimizer;
    NetworkArch arch;
    DatasetConfig dataset;
    ScheduleConfig schedule;
    std::string out_dir = "run_out";
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json serialize_run_config(const RunConfig& cfg);

struct RunSummary {
    std::vector<MetricsRow> rows;
    std::filesystem::path out_dir;
    std::filesystem::path metrics_path;
    std::filesystem::path final_checkpoint;
    double final_test_accuracy = 0.0;
    double final_pruned_percent = 0.0;
};

// Runs a full training experiment per the config, writing metrics.csv (one
// flushed row per epoch), periodic checkpoints and a final checkpoint under
// cfg.out_dir. Dispatches on cfg.precision.
RunSummary run_experiment(const RunConfig& cfg);

struct CompareOutputs {
    std::filesystem::path summary_csv;
    std::filesystem::path accuracy_csv, params_csv;
    std::filesystem::path accuracy_svg, params_svg;
};

CompareOutputs compare_runs(const std::vector<std::filesystem::path>& run_dirs,
                            const std::filesystem::path& out_dir);

struct CostQuery {
    std::uint64_t batch = 1;
    std::vector<double> prune_percents;  // per conv layer; one value broadcasts; empty = dense
    std::optional<cost::SavingsParams> savings;
    std::optional<cost::LatencyParams> latency;
};

std::vector<cost::LayerGeometry> conv_geometry_chain(const NetworkArch& arch, int in_channels, int in_side);
std::vector<cost::LayerPruning> chain_pruning(const std::vector<double>& curr_percent, std::size_t layer_count);
std::string cost_report_csv(const RunConfig& cfg, const CostQuery& q);

namespace detail {

template <typename T>
std::pair<data::Dataset<T>, data::Dataset<T>> load_datasets(const DatasetConfig& dc) {
    data::Dataset<T> train, test;
    switch (dc.kind) {
        case DatasetKind::Blobs: {
            auto full = data::synthetic_blobs<T>(dc.classes, dc.train_count + dc.test_count, dc.side, dc.blob_seed,
                                                 dc.channels);
            auto split = data::split_dataset(full, dc.train_count);
            train = std::move(split.first);
            test = std::move(split.second);
            break;
        }
        case DatasetKind::Idx: {
            train = data::load_idx<T>(dc.train_images, dc.train_labels);
            test = data::load_idx<T>(dc.test_images, dc.test_labels);
            int classes = std::max(train.num_classes, test.num_classes);
            train.num_classes = test.num_classes = classes;
            break;
        }
        case DatasetKind::Cifar10:
        case DatasetKind::Cifar100: {
            auto fmt = dc.kind == DatasetKind::Cifar10 ? data::CifarFormat::Cifar10 : data::CifarFormat::Cifar100;
            std::vector<std::filesystem::path> tr(dc.train_paths.begin(), dc.train_paths.end());
            std::vector<std::filesystem::path> te(dc.test_paths.begin(), dc.test_paths.end());
            train = data::load_cifar<T>(tr, fmt);
            test = data::load_cifar<T>(te, fmt);
            break;
        }
    }
    auto stats = data::compute_channel_stats(train);
    data::normalize_with(train, stats);
    data::normalize_with(test, stats);
    return {std::move(train), std::move(test)};
}

// Deterministic test-set accuracy; threads > 1 splits the batches over
// worker threads (the network is read-only here).
template <typename T>
double evaluate_accuracy(const Network<T>& net, const data::Dataset<T>& ds, int batch_size, int threads) {
    const std::size_t n = ds.size();
    std::vector<std::vector<std::uint32_t>> batches;
    for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
        std::vector<std::uint32_t> idx;
        for (std::size_t i = at; i < std::min(n, at + static_cast<std::size_t>(batch_size)); ++i)
            idx.push_back(static_cast<std::uint32_t>(i));
        batches.push_back(std::move(idx));
    }

    auto eval_range = [&](std::size_t lo, std::size_t hi, std::size_t& correct, std::exception_ptr& err) {
        try {
            std::size_t c = 0;
            for (std::size_t bi = lo; bi < hi; ++bi) {
                auto [x, y] = data::gather_batch(ds, batches[bi]);
                Tensor<T> logits = net.forward_eval(x);
                c += Network<T>::count_correct(logits, y);
            }
            correct = c;
        } catch (...) {
            err = std::current_exception();
        }
    };

    std::size_t total_correct = 0;
    std::exception_ptr first_error;
    if (threads <= 1 || batches.size() <= 1) {
        eval_range(0, batches.size(), total_correct, first_error);
    } else {
        std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), batches.size());
        std::vector<std::size_t> corrects(workers, 0);
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        std::size_t per = (batches.size() + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            std::size_t lo = w * per, hi = std::min(batches.size(), lo + per);
            if (lo >= hi) break;
            pool.emplace_back(eval_range, lo, hi, std::ref(corrects[w]), std::ref(errors[w]));
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e && !first_error) first_error = e;
        for (std::size_t c : corrects) total_correct += c;
    }
    if (first_error) std::rethrow_exception(first_error);
    return 100.0 * static_cast<double>(total_correct) / static_cast<double>(n);
}

template <typename T>
RunSummary run_training(const RunConfig& cfg) {
    validate_schedule(cfg.schedule);
    std::filesystem::path out_dir(cfg.out_dir);
    std::filesystem::create_directories(out_dir);

    auto [train, test] = load_datasets<T>(cfg.dataset);
    const int channels = static_cast<int>(train.channels());
    const int side = static_cast<int>(train.side());

    Network<T> net(cfg.arch, channels, side, cfg.seed);
    if (net.num_classes() != train.num_classes)
        throw ConfigError("network.layers: final linear width " + std::to_string(net.num_classes()) +
                          " does not match the dataset's " + std::to_string(train.num_classes) + " classes");

    {
        std::ofstream echo(out_dir / "config.json", std::ios::trunc);
        echo << serialize_run_config(cfg).dump(2) << "\n";
    }

    ScheduleState state = init_schedule_state(cfg.schedule);
    Rng prune_rng(mix_seed(cfg.seed, 0x7072756eull));
    const bool want_acc =
        cfg.schedule.mode == ScheduleMode::Pwt && cfg.schedule.criterion == PruneCriterion::MeanActivation;
    ActivationAccumulator<T> acc;

    MetricsWriter metrics(out_dir / "metrics.csv");
    RunSummary summary;
    summary.out_dir = out_dir;
    summary.metrics_path = metrics.path();

    std::int64_t step = 0;
    std::uint64_t macs_before = 0;
    using clock = std::chrono::steady_clock;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        auto epoch_start = clock::now();
        if (want_acc) acc.reset(net);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        auto plan = data::batch_plan(train.size(), static_cast<std::size_t>(cfg.batch_size), cfg.seed, epoch);
        for (std::size_t bi = 0; bi < plan.size(); ++bi) {
            auto [x, y] = data::gather_batch(train, plan[bi]);
            try {
                auto r = net.train_batch(x, y, cfg.optimizer, ++step, want_acc ? &acc : nullptr);
                loss_sum += r.loss * static_cast<double>(plan[bi].size());
                correct += r.correct;
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                                         std::to_string(bi + 1) + "/" + std::to_string(plan.size()) + ": " +
                                         e.what());
            }
        }

        double scan_seconds = 0.0;
        if (cfg.record_timing) {
            auto t0 = clock::now();
            double sink = 0.0;
            for (const auto& l : net.conv_layers())
                for (double v : l1_norm_per_filter(l)) sink += v;
            scan_seconds = std::chrono::duration<double>(clock::now() - t0).count();
            if (!std::isfinite(sink)) throw std::runtime_error("filter norm scan produced non-finite values");
        }

        epoch_end_hook(net, cfg.schedule, state, epoch, want_acc ? &acc : nullptr, &prune_rng);

        MetricsRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(train.size());
        row.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(train.size());
        try {
            row.test_accuracy = evaluate_accuracy(net, test, cfg.batch_size, cfg.threads);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("evaluation failed after epoch " + std::to_string(epoch) + ": " + e.what());
        }
        row.pruned_percent = state.current_prune_perc;
        row.unmasked_parameters = net.unmasked_parameter_count();
        std::uint64_t macs_now = net.total_counters().total();
        row.executed_macs = macs_now - macs_before;
        macs_before = macs_now;
        row.wall_seconds =
            cfg.record_timing ? std::chrono::duration<double>(clock::now() - epoch_start).count() : 0.0;
        row.l1norm_seconds = scan_seconds;
        metrics.append(row);
        summary.rows.push_back(row);

        if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d.pwtc", epoch);
            write_checkpoint(out_dir / name, net, epoch, state.current_prune_perc);
        }
    }

    summary.final_checkpoint = out_dir / "checkpoint_final.pwtc";
    write_checkpoint(summary.final_checkpoint, net, cfg.epochs, state.current_prune_perc);
    if (!summary.rows.empty()) {
        summary.final_test_accuracy = summary.rows.back().test_accuracy;
        summary.final_pruned_percent = summary.rows.back().pruned_percent;
    }
    return summary;
}

}  // namespace detail

}  // namespace pwt
