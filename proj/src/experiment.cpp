#include "pwt/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pwt/svg.hpp"

namespace pwt {

RunSummary run_experiment(const RunConfig& cfg) {
    if (cfg.precision == Precision::F64) return detail::run_training<double>(cfg);
    return detail::run_training<float>(cfg);
}

namespace {

std::string run_label(const std::filesystem::path& dir) {
    std::filesystem::path p = dir;
    if (p.filename().empty()) p = p.parent_path();
    std::string name = p.filename().string();
    return name.empty() ? dir.string() : name;
}

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

CompareOutputs compare_runs(const std::vector<std::filesystem::path>& run_dirs,
                            const std::filesystem::path& out_dir) {
    if (run_dirs.empty()) throw std::invalid_argument("compare_runs: need at least one run directory");
    std::filesystem::create_directories(out_dir);

    struct Run {
        std::string label;
        std::vector<MetricsRow> rows;
    };
    std::vector<Run> runs;
    for (const auto& dir : run_dirs) {
        Run r;
        r.label = run_label(dir);
        r.rows = read_metrics_csv(dir / "metrics.csv");
        if (r.rows.empty()) throw std::runtime_error("empty metrics file: " + (dir / "metrics.csv").string());
        runs.push_back(std::move(r));
    }

    CompareOutputs out;
    out.summary_csv = out_dir / "comparison.csv";
    {
        std::ofstream f(out.summary_csv, std::ios::trunc);
        f << "run,epochs,final_test_accuracy,final_pruned_percent,total_executed_macs,total_wall_seconds\n";
        for (const Run& r : runs) {
            std::uint64_t macs = 0;
            double wall = 0.0;
            for (const auto& row : r.rows) {
                macs += row.executed_macs;
                wall += row.wall_seconds;
            }
            const MetricsRow& last = r.rows.back();
            f << r.label << "," << last.epoch << "," << num(last.test_accuracy) << ","
              << num(last.pruned_percent) << "," << macs << "," << num(wall) << "\n";
        }
    }

    auto write_long_csv = [&](const std::filesystem::path& path, const char* column,
                              auto&& value_of) {
        std::ofstream f(path, std::ios::trunc);
        f << "run,epoch," << column << "\n";
        for (const Run& r : runs)
            for (const auto& row : r.rows) f << r.label << "," << row.epoch << "," << num(value_of(row)) << "\n";
    };

    out.accuracy_csv = out_dir / "accuracy_vs_epoch.csv";
    write_long_csv(out.accuracy_csv, "test_accuracy", [](const MetricsRow& r) { return r.test_accuracy; });
    out.params_csv = out_dir / "params_vs_epoch.csv";
    write_long_csv(out.params_csv, "unmasked_parameters",
                   [](const MetricsRow& r) { return static_cast<double>(r.unmasked_parameters); });

    auto make_series = [&](auto&& value_of) {
        std::vector<PlotSeries> series;
        for (const Run& r : runs) {
            PlotSeries s;
            s.label = r.label;
            for (const auto& row : r.rows) {
                s.x.push_back(row.epoch);
                s.y.push_back(value_of(row));
            }
            series.push_back(std::move(s));
        }
        return series;
    };

    out.accuracy_svg = out_dir / "accuracy_vs_epoch.svg";
    write_line_plot(out.accuracy_svg, "Test accuracy vs epoch", "epoch", "test accuracy (%)",
                    make_series([](const MetricsRow& r) { return r.test_accuracy; }));
    out.params_svg = out_dir / "params_vs_epoch.svg";
    write_line_plot(out.params_svg, "Trainable parameters vs epoch", "epoch", "unmasked parameters",
                    make_series([](const MetricsRow& r) { return static_cast<double>(r.unmasked_parameters); }));
    return out;
}

std::vector<cost::LayerGeometry> conv_geometry_chain(const NetworkArch& arch, int in_channels, int in_side) {
    std::vector<cost::LayerGeometry> chain;
    int channels = in_channels;
    int side = in_side;
    for (const ArchLayer& a : arch.layers) {
        switch (a.op) {
            case LayerOp::Conv: {
                chain.push_back(cost::LayerGeometry::make(side, a.kernel, channels, a.filters, a.stride));
                side = chain.back().output_side;
                channels = a.filters;
                break;
            }
            case LayerOp::Pool:
                if (side % 2 != 0)
                    throw std::invalid_argument("conv_geometry_chain: pool needs an even feature map side");
                side /= 2;
                break;
            case LayerOp::Linear:
                return chain;
        }
    }
    return chain;
}

std::vector<cost::LayerPruning> chain_pruning(const std::vector<double>& curr_percent, std::size_t layer_count) {
    std::vector<double> curr(layer_count, 0.0);
    if (curr_percent.size() == 1) {
        std::fill(curr.begin(), curr.end(), curr_percent[0]);
    } else if (!curr_percent.empty()) {
        if (curr_percent.size() != layer_count)
            throw std::invalid_argument("chain_pruning: expected one percentage or one per conv layer (" +
                                        std::to_string(layer_count) + ")");
        curr = curr_percent;
    }
    std::vector<cost::LayerPruning> pruning(layer_count);
    for (std::size_t i = 0; i < layer_count; ++i) {
        pruning[i].curr_pruned_percent = curr[i];
        pruning[i].prev_pruned_percent = i == 0 ? 0.0 : curr[i - 1];  // input channels are never pruned
    }
    return pruning;
}

std::string cost_report_csv(const RunConfig& cfg, const CostQuery& q) {
    if (cfg.dataset.kind != DatasetKind::Blobs && cfg.dataset.kind != DatasetKind::Idx &&
        cfg.dataset.kind != DatasetKind::Cifar10 && cfg.dataset.kind != DatasetKind::Cifar100)
        throw std::invalid_argument("cost_report_csv: unsupported dataset kind");

    int channels, side;
    switch (cfg.dataset.kind) {
        case DatasetKind::Blobs:
            channels = cfg.dataset.channels;
            side = cfg.dataset.side;
            break;
        case DatasetKind::Cifar10:
        case DatasetKind::Cifar100:
            channels = 3;
            side = 32;
            break;
        case DatasetKind::Idx:
        default:
            channels = 1;
            side = 28;
            break;
    }

    auto chain = conv_geometry_chain(cfg.arch, channels, side);
    auto pruning = chain_pruning(q.prune_percents, chain.size());
    cost::CostReport report = cost::network_costs(chain, pruning, q.batch);

    std::ostringstream out;
    out << "layer,input_side,output_side,kernel,in_channels,out_channels,stride,"
           "prev_pruned_percent,curr_pruned_percent,forward_macs,error_macs,weight_grad_macs,"
           "input_reads,weight_reads,activation_writes,weight_writes\n";
    auto counts = [&](const cost::OpCounts& c) {
        return num(c.forward_macs) + "," + num(c.error_macs) + "," + num(c.weight_grad_macs) + "," +
               num(c.input_reads) + "," + num(c.weight_reads) + "," + num(c.activation_writes) + "," +
               num(c.weight_writes);
    };
    for (std::size_t i = 0; i < chain.size(); ++i) {
        const auto& g = chain[i];
        out << i << "," << g.input_side << "," << g.output_side << "," << g.kernel_side << "," << g.in_channels
            << "," << g.out_channels << "," << g.stride << "," << num(pruning[i].prev_pruned_percent) << ","
            << num(pruning[i].curr_pruned_percent) << "," << counts(report.per_layer[i]) << "\n";
    }
    out << "total,,,,,,,,," << counts(report.totals) << "\n";

    if (q.savings || q.latency) {
        out << "\nmetric,value\n";
        if (q.savings) out << "savings," << num(cost::savings(*q.savings)) << "\n";
        if (q.latency) {
            out << "latency_pwt_seconds," << num(cost::latency_pwt(*q.latency)) << "\n";
            out << "latency_prt_seconds," << num(cost::latency_prt(*q.latency)) << "\n";
        }
    }
    return out.str();
}

}  // namespace pwt
