#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pwt/experiment.hpp"
#include "support/tempdir.hpp"

using namespace pwt;
using nlohmann::json;
using testsupport::TempDir;

namespace {

json base_config(const std::string& out_dir) {
    json j;
    j["precision"] = "f32";
    j["seed"] = 7;
    j["epochs"] = 3;
    j["batch_size"] = 16;
    j["checkpoint_every"] = 10;
    j["record_timing"] = false;
    j["network"]["batchnorm"] = true;
    j["network"]["layers"] = json::array();
    j["network"]["layers"].push_back({{"type", "conv"}, {"filters", 6}, {"kernel", 3}});
    j["network"]["layers"].push_back({{"type", "conv"}, {"filters", 8}, {"kernel", 3}});
    j["network"]["layers"].push_back({{"type", "pool"}});
    j["network"]["layers"].push_back({{"type", "linear"}, {"out", 4}});
    j["dataset"] = {{"kind", "blobs"}, {"classes", 4}, {"train", 64}, {"test", 32}, {"side", 12}, {"seed", 5}};
    j["schedule"] = {{"mode", "none"}};
    j["out_dir"] = out_dir;
    return j;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config: unknown keys are rejected with their field path") {
    auto j = base_config("x");
    j["schedule"]["typo_key"] = 1;
    try {
        parse_run_config(j);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("config.schedule.typo_key") != std::string::npos);
    }

    auto j2 = base_config("x");
    j2["network"]["layers"][0]["paddding"] = 1;
    CHECK_THROWS_AS(parse_run_config(j2), ConfigError);
}

TEST_CASE("config: value validation carries field paths") {
    auto j = base_config("x");
    j["epochs"] = 0;
    CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("config.epochs"), ConfigError);

    auto j2 = base_config("x");
    j2["dataset"]["kind"] = "imagenet";
    CHECK_THROWS_WITH_AS(parse_run_config(j2), doctest::Contains("config.dataset.kind"), ConfigError);

    auto j3 = base_config("x");
    j3["schedule"] = {{"mode", "pwt"}, {"rate_per_epoch", 1.0}, {"target_prune_perc", 90.0}};
    // 3 epochs at 1% cannot reach 90%
    CHECK_THROWS_WITH_AS(parse_run_config(j3), doctest::Contains("config.schedule"), ConfigError);

    auto j4 = base_config("x");
    j4["network"]["layers"] = json::array({json{{"type", "conv"}, {"filters", 4}}});
    RunConfig cfg = parse_run_config(j4);  // parses, but the net has no classifier
    CHECK_THROWS_AS(run_experiment(cfg), std::invalid_argument);
}

TEST_CASE("config: round trip through serialize/parse") {
    RunConfig cfg = parse_run_config(base_config("somewhere"));
    RunConfig again = parse_run_config(serialize_run_config(cfg));
    CHECK(again.seed == cfg.seed);
    CHECK(again.epochs == cfg.epochs);
    CHECK(again.arch.layers.size() == cfg.arch.layers.size());
    CHECK(again.dataset.train_count == cfg.dataset.train_count);
}

TEST_CASE("run: mode none produces one row per epoch with zero pruning") {
    TempDir tmp("run_none");
    RunConfig cfg = parse_run_config(base_config((tmp.path / "r").string()));
    RunSummary s = run_experiment(cfg);
    REQUIRE(s.rows.size() == 3);
    for (const auto& r : s.rows) {
        CHECK(r.pruned_percent == 0.0);
        CHECK(r.executed_macs > 0);
    }
    auto rows = read_metrics_csv(s.metrics_path);
    CHECK(rows.size() == 3);
    CHECK(rows[2].epoch == 3);

    auto ckpt = read_checkpoint(s.final_checkpoint);
    CHECK(ckpt.header.at("epoch") == 3);
    CHECK(ckpt.entries.count("conv0.weights") == 1);
}

TEST_CASE("run: gradual pruning of a 40-filter net lands on the target band") {
    TempDir tmp("run_pwt");
    auto j = base_config((tmp.path / "r").string());
    j["epochs"] = 10;
    j["network"]["layers"] = json::array({json{{"type", "conv"}, {"filters", 8}, {"kernel", 3}},
                                          json{{"type", "conv"}, {"filters", 32}, {"kernel", 3}},
                                          json{{"type", "linear"}, {"out", 4}}});
    j["schedule"] = {{"mode", "pwt"}, {"criterion", "l1"}, {"rate_per_epoch", 5.0}, {"target_prune_perc", 50.0}};
    RunConfig cfg = parse_run_config(j);
    RunSummary s = run_experiment(cfg);
    CHECK(s.final_pruned_percent >= 50.0);
    CHECK(s.final_pruned_percent <= 52.5);

    // pruned percentage is non-decreasing and executed MACs non-increasing
    for (std::size_t i = 1; i < s.rows.size(); ++i) {
        CHECK(s.rows[i].pruned_percent >= s.rows[i - 1].pruned_percent);
        CHECK(s.rows[i].executed_macs <= s.rows[i - 1].executed_macs);
    }

    // the metrics column agrees with a recount from the checkpoint masks
    auto ckpt = read_checkpoint(s.final_checkpoint);
    std::size_t masked = 0, total = 0;
    for (const auto& layer_masks : ckpt.header.at("masks")) {
        for (const auto& m : layer_masks) {
            total += 1;
            masked += m.get<int>();
        }
    }
    CHECK(100.0 * static_cast<double>(masked) / static_cast<double>(total) ==
          doctest::Approx(s.rows.back().pruned_percent));
}

TEST_CASE("run: identical config and seed give byte-identical metrics") {
    TempDir tmp("run_det");
    auto j = base_config((tmp.path / "a").string());
    RunConfig a = parse_run_config(j);
    j["out_dir"] = (tmp.path / "b").string();
    RunConfig b = parse_run_config(j);
    auto sa = run_experiment(a);
    auto sb = run_experiment(b);
    CHECK(slurp(sa.metrics_path) == slurp(sb.metrics_path));
    CHECK(slurp(sa.final_checkpoint) == slurp(sb.final_checkpoint));
}

TEST_CASE("run: gradual and one-shot schedules share the dense prefix") {
    TempDir tmp("run_prefix");
    auto j = base_config((tmp.path / "pwt").string());
    j["epochs"] = 4;
    j["checkpoint_every"] = 1;
    j["schedule"] = {{"mode", "pwt"}, {"criterion", "l1"}, {"rate_per_epoch", 20.0},
                     {"target_prune_perc", 20.0}, {"mod_k", 3}};
    RunConfig pwt_cfg = parse_run_config(j);
    j["out_dir"] = (tmp.path / "prt").string();
    j["schedule"] = {{"mode", "prt"}, {"target_prune_perc", 10.0}, {"prt_prune_epoch", 3}};
    RunConfig prt_cfg = parse_run_config(j);

    run_experiment(pwt_cfg);
    run_experiment(prt_cfg);
    // epochs 1 and 2 precede any pruning event in both runs
    for (const char* name : {"checkpoint_epoch_0001.pwtc", "checkpoint_epoch_0002.pwtc"})
        CHECK(slurp(tmp.path / "pwt" / name) == slurp(tmp.path / "prt" / name));
    CHECK(slurp(tmp.path / "pwt" / "checkpoint_epoch_0003.pwtc") !=
          slurp(tmp.path / "prt" / "checkpoint_epoch_0003.pwtc"));
}

TEST_CASE("run: mean-activation criterion masks one filter per conv layer per epoch") {
    TempDir tmp("run_meanact");
    auto j = base_config((tmp.path / "r").string());
    j["epochs"] = 3;
    j["schedule"] = {{"mode", "pwt"}, {"criterion", "mean_activation"}, {"rate_per_epoch", 1.0},
                     {"target_prune_perc", 90.0}};
    RunConfig cfg = parse_run_config(j);
    RunSummary s = run_experiment(cfg);
    // two conv layers, one filter each per epoch, 14 filters total
    CHECK(s.rows[0].pruned_percent == doctest::Approx(100.0 * 2 / 14));
    CHECK(s.rows[1].pruned_percent == doctest::Approx(100.0 * 4 / 14));
    CHECK(s.rows[2].pruned_percent == doctest::Approx(100.0 * 6 / 14));
}

TEST_CASE("run: a diverged loss aborts with a diagnostic") {
    TempDir tmp("run_diverge");
    auto j = base_config((tmp.path / "r").string());
    j["optimizer"] = {{"learning_rate", 1e18}};
    RunConfig cfg = parse_run_config(j);
    CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("epoch"), std::runtime_error);
}

TEST_CASE("compare: single run summary mirrors the last metrics row") {
    TempDir tmp("cmp_single");
    RunConfig cfg = parse_run_config(base_config((tmp.path / "solo").string()));
    RunSummary s = run_experiment(cfg);
    auto out = compare_runs({tmp.path / "solo"}, tmp.path / "cmp");

    std::string summary = slurp(out.summary_csv);
    std::istringstream lines(summary);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    CHECK(header ==
          "run,epochs,final_test_accuracy,final_pruned_percent,total_executed_macs,total_wall_seconds");
    CHECK(row.find("solo,3,") == 0);
    char expected[64];
    std::snprintf(expected, sizeof(expected), "%.9g", s.rows.back().test_accuracy);
    CHECK(row.find(expected) != std::string::npos);
    CHECK(std::filesystem::exists(out.accuracy_svg));
    CHECK(slurp(out.accuracy_svg).find("<svg") == 0);
    CHECK(std::filesystem::exists(out.params_csv));
}

TEST_CASE("compare: parameter curves separate the schedules (staircase vs single step)") {
    TempDir tmp("cmp_shapes");
    auto j = base_config((tmp.path / "pwt").string());
    j["epochs"] = 8;
    j["schedule"] = {{"mode", "pwt"}, {"criterion", "l1"}, {"rate_per_epoch", 5.0}, {"target_prune_perc", 40.0}};
    run_experiment(parse_run_config(j));
    j["out_dir"] = (tmp.path / "prt").string();
    j["schedule"] = {{"mode", "prt"}, {"target_prune_perc", 40.0}, {"prt_prune_epoch", 6}};
    run_experiment(parse_run_config(j));

    auto pwt_rows = read_metrics_csv(tmp.path / "pwt" / "metrics.csv");
    auto prt_rows = read_metrics_csv(tmp.path / "prt" / "metrics.csv");
    int pwt_drops = 0, prt_drops = 0;
    for (std::size_t i = 1; i < pwt_rows.size(); ++i) {
        pwt_drops += pwt_rows[i].unmasked_parameters < pwt_rows[i - 1].unmasked_parameters;
        prt_drops += prt_rows[i].unmasked_parameters < prt_rows[i - 1].unmasked_parameters;
    }
    CHECK(pwt_drops >= 4);   // staircase descent
    CHECK(prt_drops == 1);   // one abrupt step
    CHECK(prt_rows[0].unmasked_parameters == prt_rows[4].unmasked_parameters);

    CHECK_NOTHROW(compare_runs({tmp.path / "pwt", tmp.path / "prt"}, tmp.path / "cmp"));
}

TEST_CASE("compare: a directory without metrics names the missing file") {
    TempDir tmp("cmp_missing");
    std::filesystem::create_directories(tmp.path / "empty");
    CHECK_THROWS_WITH_AS(compare_runs({tmp.path / "empty"}, tmp.path / "out"),
                         doctest::Contains("metrics.csv"), std::runtime_error);
}

TEST_CASE("cost report: geometry chain, dense parity with an instrumented run") {
    TempDir tmp("cost");
    auto j = base_config((tmp.path / "r").string());
    j["epochs"] = 2;
    RunConfig cfg = parse_run_config(j);
    RunSummary s = run_experiment(cfg);

    auto chain = conv_geometry_chain(cfg.arch, cfg.dataset.channels, cfg.dataset.side);
    REQUIRE(chain.size() == 2);
    CHECK(chain[0].output_side == 10);
    CHECK(chain[1].input_side == 10);

    auto report = cost::network_costs(chain, chain_pruning({}, 2), 1);
    double per_image = report.totals.total_macs();
    double expected_total = per_image * 64.0 * 2.0;  // train images times epochs, dense run
    double instrumented = 0;
    for (const auto& r : s.rows) instrumented += static_cast<double>(r.executed_macs);
    CHECK(instrumented == expected_total);
}

TEST_CASE("cost report: csv shape, savings row, empty chains") {
    RunConfig cfg = parse_run_config(base_config("unused"));
    CostQuery q;
    q.savings = cost::SavingsParams{80, 10, 0.80, 1.0};
    q.latency = cost::LatencyParams{100, 10, 1.0, 37.5, 3.3};
    std::string csv = cost_report_csv(cfg, q);
    CHECK(csv.find("layer,input_side") == 0);
    CHECK(csv.find("\ntotal,") != std::string::npos);
    CHECK(csv.find("savings,0.409756") != std::string::npos);
    CHECK(csv.find("latency_pwt_seconds,4080") != std::string::npos);
    CHECK(csv.find("latency_prt_seconds,4128.3") != std::string::npos);

    // conv-free architecture: empty table, zero totals
    auto j = base_config("unused");
    j["network"]["layers"] = json::array({json{{"type", "linear"}, {"out", 4}}});
    RunConfig lin = parse_run_config(j);
    std::string empty_csv = cost_report_csv(lin, CostQuery{});
    CHECK(empty_csv.find("total,,,,,,,,,0,0,0,0,0,0,0") != std::string::npos);

    CHECK_THROWS_AS(cost_report_csv(cfg, CostQuery{1, {10.0, 20.0, 30.0}, {}, {}}), std::invalid_argument);
}

TEST_CASE("fixture: a two-conv net separates the synthetic blobs quickly") {
    TempDir tmp("fixture");
    auto j = base_config((tmp.path / "r").string());
    j["epochs"] = 5;
    j["dataset"] = {{"kind", "blobs"}, {"classes", 4}, {"train", 256}, {"test", 128}, {"side", 12}, {"seed", 3}};
    RunConfig cfg = parse_run_config(j);
    RunSummary s = run_experiment(cfg);
    CHECK(s.final_test_accuracy > 90.0);
}
