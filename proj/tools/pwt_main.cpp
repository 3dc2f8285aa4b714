#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pwt/experiment.hpp"

// Command line front end: `pwt train` runs an experiment from a JSON config,
// `pwt compare` overlays finished runs, `pwt cost` prints the analytic op
// model for a configured network. Exit codes: 0 success, 1 usage or config
// error, 2 runtime error.

namespace {

int cmd_train(const std::string& config_path, const std::string& out_dir, std::uint64_t seed, bool seed_set,
              int threads, bool no_timing) {
    pwt::RunConfig cfg = pwt::load_run_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) cfg.seed = seed;
    if (threads > 0) cfg.threads = threads;
    if (no_timing) cfg.record_timing = false;

    pwt::RunSummary s = pwt::run_experiment(cfg);
    std::printf("run complete: %zu epochs, final test accuracy %.2f%%, pruned %.2f%%\n", s.rows.size(),
                s.final_test_accuracy, s.final_pruned_percent);
    std::printf("metrics: %s\n", s.metrics_path.string().c_str());
    std::printf("checkpoint: %s\n", s.final_checkpoint.string().c_str());
    return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_dir) {
    std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
    pwt::CompareOutputs out = pwt::compare_runs(paths, out_dir);
    std::printf("summary: %s\n", out.summary_csv.string().c_str());
    std::printf("plots: %s, %s\n", out.accuracy_svg.string().c_str(), out.params_svg.string().c_str());
    return 0;
}

int cmd_cost(const std::string& config_path, const std::string& out_file, std::uint64_t batch,
             const std::vector<double>& prune_percents, int epochs_n, int retrain_m, double target,
             double batches_per_epoch, double batch_seconds, double scan_seconds) {
    pwt::RunConfig cfg = pwt::load_run_config(config_path);
    pwt::CostQuery q;
    q.batch = batch;
    q.prune_percents = prune_percents;
    if (epochs_n > 0) {
        pwt::cost::SavingsParams sp;
        sp.train_epochs = epochs_n;
        sp.retrain_epochs = retrain_m;
        sp.target_rate = target;
        q.savings = sp;
    }
    if (batches_per_epoch > 0 && batch_seconds > 0) {
        pwt::cost::LatencyParams lp;
        lp.train_epochs = epochs_n;
        lp.retrain_epochs = retrain_m;
        lp.batches_per_epoch = batches_per_epoch;
        lp.batch_seconds = batch_seconds;
        lp.scan_seconds = scan_seconds;
        q.latency = lp;
    }
    std::string csv = pwt::cost_report_csv(cfg, q);
    if (out_file.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream f(out_file, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot open " + out_file + " for writing");
        f << csv;
        std::printf("cost report: %s\n", out_file.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"filter-pruning-while-training experiment runner"};
    app.require_subcommand(1);

    // train
    std::string train_config, train_out;
    std::uint64_t train_seed = 0;
    int train_threads = 0;
    bool train_no_timing = false;
    CLI::App* train = app.add_subcommand("train", "train a network per a JSON config");
    train->add_option("--config", train_config, "config JSON path")->required();
    train->add_option("--out", train_out, "output directory (overrides config)");
    CLI::Option* seed_opt = train->add_option("--seed", train_seed, "seed override");
    train->add_option("--threads", train_threads, "evaluation threads (training stays single threaded)");
    train->add_flag("--no-timing", train_no_timing, "write zeros to the timing columns of metrics.csv");

    // compare
    std::vector<std::string> cmp_dirs;
    std::string cmp_out = "compare_out";
    CLI::App* compare = app.add_subcommand("compare", "summarize and plot finished runs");
    compare->add_option("dirs", cmp_dirs, "run directories")->required()->expected(-1);
    compare->add_option("--out", cmp_out, "output directory");

    // cost
    std::string cost_config, cost_out;
    std::uint64_t cost_batch = 1;
    std::vector<double> cost_prune;
    int cost_n = 0, cost_m = 0;
    double cost_target = 0.0, cost_b = 0.0, cost_tb = 0.0, cost_tl1 = 0.0;
    CLI::App* cost = app.add_subcommand("cost", "analytic op counts, savings and latency projections");
    cost->add_option("--config", cost_config, "config JSON path")->required();
    cost->add_option("--out", cost_out, "write the CSV here instead of stdout");
    cost->add_option("--batch", cost_batch, "images per count (default 1)");
    cost->add_option("--prune-perc", cost_prune, "pruned percent per conv layer (one value broadcasts)");
    cost->add_option("--epochs-n", cost_n, "nominal training epochs for the savings/latency rows");
    cost->add_option("--retrain-m", cost_m, "retraining epochs for the savings/latency rows");
    cost->add_option("--target", cost_target, "target pruning rate as a fraction in [0,1)");
    cost->add_option("--batches-per-epoch", cost_b, "mini-batches per epoch for the latency rows");
    cost->add_option("--batch-seconds", cost_tb, "seconds per mini-batch for the latency rows");
    cost->add_option("--scan-seconds", cost_tl1, "per-epoch filter-norm scan seconds for the latency rows");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (*train) return cmd_train(train_config, train_out, train_seed, seed_opt->count() > 0, train_threads,
                                     train_no_timing);
        if (*compare) return cmd_compare(cmp_dirs, cmp_out);
        if (*cost) return cmd_cost(cost_config, cost_out, cost_batch, cost_prune, cost_n, cost_m, cost_target,
                                   cost_b, cost_tb, cost_tl1);
    } catch (const pwt::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
