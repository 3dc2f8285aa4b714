#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace pwt {

// One per-epoch record of a training run. Column order in metrics.csv is
// fixed to the field order below.
struct MetricsRow {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;     // percent
    double test_accuracy = 0.0;      // percent
    double pruned_percent = 0.0;
    std::uint64_t unmasked_parameters = 0;
    std::uint64_t executed_macs = 0;  // conv MACs this epoch, all passes
    double wall_seconds = 0.0;
    double l1norm_seconds = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,train_loss,train_accuracy,test_accuracy,pruned_percent,"
    "unmasked_parameters,executed_macs,wall_seconds,l1norm_seconds";

// Appends rows to metrics.csv and flushes after each one so a crashed run
// keeps everything written so far.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::filesystem::path& path);
    void append(const MetricsRow& row);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

std::string format_metrics_row(const MetricsRow& row);

}  // namespace pwt
