#include <fstream>
#include <initializer_list>
#include <string>

#include "pwt/experiment.hpp"

namespace pwt {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) { throw ConfigError(path + ": " + msg); }

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (item.key() == a) ok = true;
        if (!ok) fail(path + "." + item.key(), "unknown key");
    }
}

const json* find(const json& j, const char* key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

int get_int(const json& j, const std::string& path, const char* key, int def, int min_value) {
    const json* v = find(j, key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(path + "." + key, "expected an integer");
    int out = v->get<int>();
    if (out < min_value) fail(path + "." + key, "must be >= " + std::to_string(min_value));
    return out;
}

double get_double(const json& j, const std::string& path, const char* key, double def) {
    const json* v = find(j, key);
    if (!v) return def;
    if (!v->is_number()) fail(path + "." + key, "expected a number");
    return v->get<double>();
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
    const json* v = find(j, key);
    if (!v) return def;
    if (!v->is_boolean()) fail(path + "." + key, "expected a boolean");
    return v->get<bool>();
}

std::uint64_t get_u64(const json& j, const std::string& path, const char* key, std::uint64_t def) {
    const json* v = find(j, key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !v->is_number_integer()) fail(path + "." + key, "expected an integer");
    if (v->is_number_integer() && v->get<std::int64_t>() < 0) fail(path + "." + key, "must be >= 0");
    return v->get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& path, const char* key, const char* def = nullptr) {
    const json* v = find(j, key);
    if (!v) {
        if (def) return def;
        fail(path + "." + key, "missing required key");
    }
    if (!v->is_string()) fail(path + "." + key, "expected a string");
    return v->get<std::string>();
}

NetworkArch parse_network(const json& j, const std::string& path) {
    check_keys(j, path, {"batchnorm", "layers"});
    NetworkArch arch;
    arch.batchnorm = get_bool(j, path, "batchnorm", true);
    const json* layers = find(j, "layers");
    if (!layers) fail(path + ".layers", "missing required key");
    if (!layers->is_array() || layers->empty()) fail(path + ".layers", "expected a non-empty array");
    for (std::size_t i = 0; i < layers->size(); ++i) {
        const json& lj = (*layers)[i];
        std::string lpath = path + ".layers[" + std::to_string(i) + "]";
        if (!lj.is_object()) fail(lpath, "expected an object");
        std::string type = get_string(lj, lpath, "type");
        ArchLayer a;
        if (type == "conv") {
            check_keys(lj, lpath, {"type", "filters", "kernel", "stride"});
            a.op = LayerOp::Conv;
            a.filters = get_int(lj, lpath, "filters", 0, 1);
            if (a.filters == 0) fail(lpath + ".filters", "missing required key");
            a.kernel = get_int(lj, lpath, "kernel", 3, 1);
            a.stride = get_int(lj, lpath, "stride", 1, 1);
        } else if (type == "pool") {
            check_keys(lj, lpath, {"type"});
            a.op = LayerOp::Pool;
        } else if (type == "linear") {
            check_keys(lj, lpath, {"type", "out"});
            a.op = LayerOp::Linear;
            a.out = get_int(lj, lpath, "out", 0, 1);
            if (a.out == 0) fail(lpath + ".out", "missing required key");
        } else {
            fail(lpath + ".type", "expected one of conv, pool, linear");
        }
        arch.layers.push_back(a);
    }
    return arch;
}

DatasetConfig parse_dataset(const json& j, const std::string& path) {
    DatasetConfig dc;
    std::string kind = get_string(j, path, "kind");
    if (kind == "blobs") {
        check_keys(j, path, {"kind", "classes", "train", "test", "side", "channels", "seed"});
        dc.kind = DatasetKind::Blobs;
        dc.classes = get_int(j, path, "classes", 8, 2);
        dc.train_count = static_cast<std::size_t>(get_int(j, path, "train", 512, 1));
        dc.test_count = static_cast<std::size_t>(get_int(j, path, "test", 256, 1));
        dc.side = get_int(j, path, "side", 16, 4);
        dc.channels = get_int(j, path, "channels", 1, 1);
        dc.blob_seed = get_u64(j, path, "seed", 1);
    } else if (kind == "idx") {
        check_keys(j, path, {"kind", "train_images", "train_labels", "test_images", "test_labels"});
        dc.kind = DatasetKind::Idx;
        dc.train_images = get_string(j, path, "train_images");
        dc.train_labels = get_string(j, path, "train_labels");
        dc.test_images = get_string(j, path, "test_images");
        dc.test_labels = get_string(j, path, "test_labels");
    } else if (kind == "cifar10" || kind == "cifar100") {
        check_keys(j, path, {"kind", "train", "test"});
        dc.kind = kind == "cifar10" ? DatasetKind::Cifar10 : DatasetKind::Cifar100;
        for (const char* key : {"train", "test"}) {
            const json* v = find(j, key);
            if (!v) fail(path + "." + key, "missing required key");
            if (!v->is_array() || v->empty()) fail(path + "." + key, "expected a non-empty array of paths");
            for (const auto& p : *v) {
                if (!p.is_string()) fail(path + "." + key, "expected string paths");
                (std::string(key) == "train" ? dc.train_paths : dc.test_paths).push_back(p.get<std::string>());
            }
        }
    } else {
        fail(path + ".kind", "expected one of blobs, idx, cifar10, cifar100");
    }
    return dc;
}

ScheduleConfig parse_schedule(const json& j, const std::string& path) {
    check_keys(j, path,
               {"mode", "criterion", "initial_prune_perc", "rate_per_epoch", "target_prune_perc", "mod_k",
                "advance_target_on_skip", "prt_prune_epoch", "min_filters_per_layer", "l1_scope"});
    ScheduleConfig sc;
    std::string mode = get_string(j, path, "mode", "none");
    if (mode == "none")
        sc.mode = ScheduleMode::None;
    else if (mode == "pwt")
        sc.mode = ScheduleMode::Pwt;
    else if (mode == "prt")
        sc.mode = ScheduleMode::Prt;
    else
        fail(path + ".mode", "expected one of none, pwt, prt");

    std::string crit = get_string(j, path, "criterion", "l1");
    if (crit == "l1")
        sc.criterion = PruneCriterion::L1Norm;
    else if (crit == "mean_activation")
        sc.criterion = PruneCriterion::MeanActivation;
    else if (crit == "random")
        sc.criterion = PruneCriterion::Random;
    else
        fail(path + ".criterion", "expected one of l1, mean_activation, random");

    sc.initial_prune_perc = get_double(j, path, "initial_prune_perc", 0.0);
    sc.rate_per_epoch = get_double(j, path, "rate_per_epoch", 1.0);
    sc.target_prune_perc = get_double(j, path, "target_prune_perc", 0.0);
    sc.mod_k = get_int(j, path, "mod_k", 1, 1);
    sc.advance_target_on_skip = get_bool(j, path, "advance_target_on_skip", false);
    sc.prt_prune_epoch = get_int(j, path, "prt_prune_epoch", 0, 0);
    sc.min_filters_per_layer = get_int(j, path, "min_filters_per_layer", 1, 0);
    std::string scope = get_string(j, path, "l1_scope", "global");
    if (scope == "global")
        sc.l1_scope = L1Scope::Global;
    else if (scope == "per_layer")
        sc.l1_scope = L1Scope::PerLayer;
    else
        fail(path + ".l1_scope", "expected one of global, per_layer");
    return sc;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    check_keys(j, "config",
               {"precision", "seed", "epochs", "batch_size", "threads", "checkpoint_every", "record_timing",
                "optimizer", "network", "dataset", "schedule", "out_dir"});

    RunConfig cfg;
    std::string prec = get_string(j, "config", "precision", "f32");
    if (prec == "f32")
        cfg.precision = Precision::F32;
    else if (prec == "f64")
        cfg.precision = Precision::F64;
    else
        fail("config.precision", "expected f32 or f64");

    cfg.seed = get_u64(j, "config", "seed", 1);
    cfg.epochs = get_int(j, "config", "epochs", 10, 1);
    cfg.batch_size = get_int(j, "config", "batch_size", 32, 1);
    cfg.threads = get_int(j, "config", "threads", 1, 1);
    cfg.checkpoint_every = get_int(j, "config", "checkpoint_every", 10, 0);
    cfg.record_timing = get_bool(j, "config", "record_timing", true);
    cfg.out_dir = get_string(j, "config", "out_dir", "run_out");

    if (const json* oj = find(j, "optimizer")) {
        check_keys(*oj, "config.optimizer", {"learning_rate", "beta1", "beta2", "epsilon"});
        cfg.optimizer.learning_rate = get_double(*oj, "config.optimizer", "learning_rate", 1e-3);
        cfg.optimizer.beta1 = get_double(*oj, "config.optimizer", "beta1", 0.9);
        cfg.optimizer.beta2 = get_double(*oj, "config.optimizer", "beta2", 0.999);
        cfg.optimizer.epsilon = get_double(*oj, "config.optimizer", "epsilon", 1e-8);
        if (cfg.optimizer.learning_rate <= 0) fail("config.optimizer.learning_rate", "must be > 0");
        if (cfg.optimizer.beta1 < 0 || cfg.optimizer.beta1 >= 1) fail("config.optimizer.beta1", "must lie in [0,1)");
        if (cfg.optimizer.beta2 < 0 || cfg.optimizer.beta2 >= 1) fail("config.optimizer.beta2", "must lie in [0,1)");
        if (cfg.optimizer.epsilon <= 0) fail("config.optimizer.epsilon", "must be > 0");
    }

    const json* nj = find(j, "network");
    if (!nj) fail("config.network", "missing required key");
    cfg.arch = parse_network(*nj, "config.network");

    const json* dj = find(j, "dataset");
    if (!dj) fail("config.dataset", "missing required key");
    cfg.dataset = parse_dataset(*dj, "config.dataset");

    if (const json* sj = find(j, "schedule")) cfg.schedule = parse_schedule(*sj, "config.schedule");
    cfg.schedule.total_epochs = cfg.epochs;
    try {
        validate_schedule(cfg.schedule);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.schedule: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_run_config(j);
}

nlohmann::json serialize_run_config(const RunConfig& cfg) {
    json j;
    j["precision"] = cfg.precision == Precision::F32 ? "f32" : "f64";
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["threads"] = cfg.threads;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["record_timing"] = cfg.record_timing;
    j["out_dir"] = cfg.out_dir;
    j["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                      {"beta1", cfg.optimizer.beta1},
                      {"beta2", cfg.optimizer.beta2},
                      {"epsilon", cfg.optimizer.epsilon}};

    json layers = json::array();
    for (const ArchLayer& a : cfg.arch.layers) {
        switch (a.op) {
            case LayerOp::Conv:
                layers.push_back({{"type", "conv"}, {"filters", a.filters}, {"kernel", a.kernel}, {"stride", a.stride}});
                break;
            case LayerOp::Pool:
                layers.push_back({{"type", "pool"}});
                break;
            case LayerOp::Linear:
                layers.push_back({{"type", "linear"}, {"out", a.out}});
                break;
        }
    }
    j["network"] = {{"batchnorm", cfg.arch.batchnorm}, {"layers", layers}};

    json d;
    switch (cfg.dataset.kind) {
        case DatasetKind::Blobs:
            d = {{"kind", "blobs"},        {"classes", cfg.dataset.classes},
                 {"train", cfg.dataset.train_count}, {"test", cfg.dataset.test_count},
                 {"side", cfg.dataset.side},         {"channels", cfg.dataset.channels},
                 {"seed", cfg.dataset.blob_seed}};
            break;
        case DatasetKind::Idx:
            d = {{"kind", "idx"},
                 {"train_images", cfg.dataset.train_images},
                 {"train_labels", cfg.dataset.train_labels},
                 {"test_images", cfg.dataset.test_images},
                 {"test_labels", cfg.dataset.test_labels}};
            break;
        case DatasetKind::Cifar10:
        case DatasetKind::Cifar100:
            d = {{"kind", cfg.dataset.kind == DatasetKind::Cifar10 ? "cifar10" : "cifar100"},
                 {"train", cfg.dataset.train_paths},
                 {"test", cfg.dataset.test_paths}};
            break;
    }
    j["dataset"] = d;

    const char* mode = cfg.schedule.mode == ScheduleMode::None  ? "none"
                       : cfg.schedule.mode == ScheduleMode::Pwt ? "pwt"
                                                                : "prt";
    const char* crit = cfg.schedule.criterion == PruneCriterion::L1Norm           ? "l1"
                       : cfg.schedule.criterion == PruneCriterion::MeanActivation ? "mean_activation"
                                                                                  : "random";
    j["schedule"] = {{"mode", mode},
                     {"criterion", crit},
                     {"initial_prune_perc", cfg.schedule.initial_prune_perc},
                     {"rate_per_epoch", cfg.schedule.rate_per_epoch},
                     {"target_prune_perc", cfg.schedule.target_prune_perc},
                     {"mod_k", cfg.schedule.mod_k},
                     {"advance_target_on_skip", cfg.schedule.advance_target_on_skip},
                     {"prt_prune_epoch", cfg.schedule.prt_prune_epoch},
                     {"min_filters_per_layer", cfg.schedule.min_filters_per_layer},
                     {"l1_scope", cfg.schedule.l1_scope == L1Scope::Global ? "global" : "per_layer"}};
    return j;
}

}  // namespace pwt
