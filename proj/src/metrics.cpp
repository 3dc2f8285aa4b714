#include "pwt/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace pwt {

std::string format_metrics_row(const MetricsRow& r) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%" PRIu64 ",%" PRIu64 ",%.9g,%.9g", r.epoch,
                  r.train_loss, r.train_accuracy, r.test_accuracy, r.pruned_percent, r.unmasked_parameters,
                  r.executed_macs, r.wall_seconds, r.l1norm_seconds);
    return buf;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out_ << kMetricsHeader << "\n";
    out_.flush();
}

void MetricsWriter::append(const MetricsRow& row) {
    out_ << format_metrics_row(row) << "\n";
    out_.flush();
    if (!out_) throw std::runtime_error("write to " + path_.string() + " failed");
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing metrics file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty metrics file: " + path.string());
    if (line != kMetricsHeader)
        throw std::runtime_error("corrupt metrics file " + path.string() + ": unexpected header");

    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (fields.size() != 9)
            throw std::runtime_error("corrupt metrics file " + path.string() + ": bad row '" + line + "'");
        MetricsRow r;
        r.epoch = std::stoi(fields[0]);
        r.train_loss = std::stod(fields[1]);
        r.train_accuracy = std::stod(fields[2]);
        r.test_accuracy = std::stod(fields[3]);
        r.pruned_percent = std::stod(fields[4]);
        r.unmasked_parameters = std::stoull(fields[5]);
        r.executed_macs = std::stoull(fields[6]);
        r.wall_seconds = std::stod(fields[7]);
        r.l1norm_seconds = std::stod(fields[8]);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace pwt
