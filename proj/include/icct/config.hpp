#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "icct/datasets.hpp"
#include "icct/distill.hpp"
#include "icct/errors.hpp"
#include "icct/mlp.hpp"

// JSON experiment configuration. Schema-validated before any run;
// unknown keys are rejected so typos cannot silently change a run.

namespace icct {

using json = nlohmann::json;

struct ExperimentConfig {
    // Exactly one data source.
    std::optional<SynthSpec> synth;
    std::optional<std::pair<std::string, std::string>> csv_paths; // train, test
    std::optional<std::string> cifar10_dir;

    NetworkSpec student_spec;
    std::optional<NetworkSpec> teacher_spec;
    OptimizerConfig optimizer;
    int epochs = 1;
    std::size_t batch_size = 64;

    TransferKind transfer = TransferKind::None;
    IccLossMode icc_mode = IccLossMode::PerSampleMeanKL;
    double kd_temperature = kKdTemperatureCifar10;
    double lambda = 0.0;
    Scenario scenario = Scenario::TeacherLarger;
    int generations = 1;

    std::vector<std::uint64_t> seeds;
    std::string out_dir;

    json echo; // the validated document, re-emitted in sidecars
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + key + "' in " + where);
}

inline const json& require(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key))
        throw ConfigError("config: missing key '" + key + "' in " + where);
    return obj.at(key);
}

template <typename T>
T get_number(const json& obj, const std::string& key, const std::string& where) {
    const json& v = require(obj, key, where);
    if (!v.is_number())
        throw ConfigError("config: '" + key + "' in " + where + " must be a number");
    return v.get<T>();
}

inline SynthSpec parse_synth(const json& obj) {
    reject_unknown_keys(obj,
                        {"n_classes", "dim", "train_per_class", "test_per_class", "center_scale",
                         "noise_stddev", "overlap_pairs", "seed"},
                        "data.synth");
    SynthSpec spec;
    spec.n_classes = get_number<std::size_t>(obj, "n_classes", "data.synth");
    spec.dim = get_number<std::size_t>(obj, "dim", "data.synth");
    spec.train_per_class = get_number<std::size_t>(obj, "train_per_class", "data.synth");
    spec.test_per_class = get_number<std::size_t>(obj, "test_per_class", "data.synth");
    spec.center_scale = get_number<double>(obj, "center_scale", "data.synth");
    spec.noise_stddev = get_number<double>(obj, "noise_stddev", "data.synth");
    spec.overlap_pairs = get_number<std::size_t>(obj, "overlap_pairs", "data.synth");
    spec.seed = get_number<std::uint64_t>(obj, "seed", "data.synth");
    validate_synth_spec(spec);
    return spec;
}

inline NetworkSpec parse_network(const json& obj, const std::string& where) {
    reject_unknown_keys(obj, {"layers"}, where);
    NetworkSpec spec;
    const json& layers = require(obj, "layers", where);
    if (!layers.is_array() || layers.size() < 2)
        throw ConfigError("config: '" + where + ".layers' must be an array of >= 2 sizes");
    for (const auto& l : layers) spec.layer_sizes.push_back(l.get<std::size_t>());
    validate_spec(spec);
    return spec;
}

inline OptimizerConfig parse_optimizer(const json& obj) {
    reject_unknown_keys(obj,
                        {"kind", "learning_rate", "weight_decay", "momentum", "schedule"},
                        "optimizer");
    OptimizerConfig cfg;
    const std::string kind = require(obj, "kind", "optimizer").get<std::string>();
    if (kind == "sgd_nesterov")
        cfg.kind = OptimizerKind::SgdNesterov;
    else if (kind == "adam")
        cfg.kind = OptimizerKind::Adam;
    else
        throw ConfigError("config: optimizer.kind must be 'sgd_nesterov' or 'adam', got '" +
                          kind + "'");
    cfg.learning_rate = get_number<double>(obj, "learning_rate", "optimizer");
    if (obj.contains("weight_decay")) cfg.weight_decay = obj.at("weight_decay").get<double>();
    if (obj.contains("momentum")) cfg.momentum = obj.at("momentum").get<double>();
    if (obj.contains("schedule")) {
        const json& sched = obj.at("schedule");
        if (!sched.is_array()) throw ConfigError("config: optimizer.schedule must be an array");
        for (const auto& entry : sched) {
            if (!entry.is_array() || entry.size() != 2)
                throw ConfigError("config: optimizer.schedule entries must be [epoch, multiplier]");
            cfg.schedule.emplace_back(entry.at(0).get<int>(), entry.at(1).get<double>());
        }
    }
    validate_optimizer(cfg);
    return cfg;
}

inline void parse_transfer(const json& obj, ExperimentConfig& cfg) {
    reject_unknown_keys(obj, {"kind", "lambda", "icc_mode", "temperature"}, "transfer");
    const std::string kind = require(obj, "kind", "transfer").get<std::string>();
    if (kind == "none")
        cfg.transfer = TransferKind::None;
    else if (kind == "icc")
        cfg.transfer = TransferKind::Icc;
    else if (kind == "kd")
        cfg.transfer = TransferKind::Kd;
    else if (kind == "lt")
        cfg.transfer = TransferKind::Lt;
    else
        throw ConfigError("config: transfer.kind must be none|icc|kd|lt, got '" + kind + "'");
    if (obj.contains("lambda")) cfg.lambda = obj.at("lambda").get<double>();
    if (cfg.lambda < 0.0) throw ConfigError("config: transfer.lambda must be >= 0");
    if (obj.contains("icc_mode")) {
        const std::string mode = obj.at("icc_mode").get<std::string>();
        if (mode == "per_sample")
            cfg.icc_mode = IccLossMode::PerSampleMeanKL;
        else if (mode == "averaged_map")
            cfg.icc_mode = IccLossMode::AveragedMapKL;
        else
            throw ConfigError("config: transfer.icc_mode must be per_sample|averaged_map");
    }
    if (obj.contains("temperature")) {
        cfg.kd_temperature = obj.at("temperature").get<double>();
        if (!(cfg.kd_temperature > 0.0))
            throw ConfigError("config: transfer.temperature must be > 0");
    }
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    detail::reject_unknown_keys(doc,
                                {"data", "student", "teacher", "optimizer", "epochs",
                                 "batch_size", "transfer", "scenario", "generations", "seeds",
                                 "out_dir"},
                                "top level");
    ExperimentConfig cfg;
    cfg.echo = doc;

    const json& data = detail::require(doc, "data", "top level");
    detail::reject_unknown_keys(data, {"synth", "csv", "cifar10"}, "data");
    const int n_sources = static_cast<int>(data.contains("synth")) +
                          static_cast<int>(data.contains("csv")) +
                          static_cast<int>(data.contains("cifar10"));
    if (n_sources != 1)
        throw ConfigError("config: data must contain exactly one of 'synth', 'csv', 'cifar10'");
    if (data.contains("synth")) {
        cfg.synth = detail::parse_synth(data.at("synth"));
    } else if (data.contains("csv")) {
        const json& csv = data.at("csv");
        detail::reject_unknown_keys(csv, {"train", "test"}, "data.csv");
        cfg.csv_paths = {detail::require(csv, "train", "data.csv").get<std::string>(),
                         detail::require(csv, "test", "data.csv").get<std::string>()};
    } else {
        cfg.cifar10_dir = data.at("cifar10").get<std::string>();
        if (cfg.cifar10_dir->empty()) throw ConfigError("config: data.cifar10 must be a directory");
    }

    cfg.student_spec = detail::parse_network(detail::require(doc, "student", "top level"),
                                             "student");
    if (doc.contains("teacher"))
        cfg.teacher_spec = detail::parse_network(doc.at("teacher"), "teacher");
    cfg.optimizer = detail::parse_optimizer(detail::require(doc, "optimizer", "top level"));
    cfg.epochs = detail::get_number<int>(doc, "epochs", "top level");
    if (cfg.epochs < 0) throw ConfigError("config: epochs must be >= 0");
    cfg.batch_size = detail::get_number<std::size_t>(doc, "batch_size", "top level");
    if (cfg.batch_size == 0) throw ConfigError("config: batch_size must be >= 1");

    if (doc.contains("transfer")) detail::parse_transfer(doc.at("transfer"), cfg);

    if (doc.contains("scenario")) {
        const std::string s = doc.at("scenario").get<std::string>();
        if (s == "teacher_larger")
            cfg.scenario = Scenario::TeacherLarger;
        else if (s == "equal")
            cfg.scenario = Scenario::Equal;
        else if (s == "teacher_smaller")
            cfg.scenario = Scenario::TeacherSmaller;
        else
            throw ConfigError(
                "config: scenario must be teacher_larger|equal|teacher_smaller, got '" + s + "'");
    }
    if (doc.contains("generations")) {
        cfg.generations = doc.at("generations").get<int>();
        if (cfg.generations < 1) throw ConfigError("config: generations must be >= 1");
    }

    const json& seeds = detail::require(doc, "seeds", "top level");
    if (!seeds.is_array() || seeds.empty())
        throw ConfigError("config: seeds must be a non-empty array");
    for (const auto& s : seeds) cfg.seeds.push_back(s.get<std::uint64_t>());

    cfg.out_dir = detail::require(doc, "out_dir", "top level").get<std::string>();
    if (cfg.out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: JSON parse error in " + path + ": " + e.what());
    }
    return parse_experiment_config(doc);
}

// Loads whichever data source the config names.
inline std::pair<Dataset, Dataset> load_config_data(const ExperimentConfig& cfg) {
    if (cfg.synth) return gen_synthetic(*cfg.synth);
    if (cfg.cifar10_dir) return load_cifar10(*cfg.cifar10_dir);
    Dataset train = load_csv(cfg.csv_paths->first);
    Dataset test = load_csv(cfg.csv_paths->second);
    if (train.n_classes != test.n_classes)
        throw DataError("config: train/test class counts differ");
    train.split = "train";
    test.split = "test";
    return {std::move(train), std::move(test)};
}

} // namespace icct
