// icct - command-line front end: dataset generation, solo/distilled
// training, born-again generations, gradient checking, ICC map dumps,
// and comparison reports. See README for formats and exit codes.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icct/config.hpp"
#include "icct/datasets.hpp"
#include "icct/distill.hpp"
#include "icct/errors.hpp"
#include "icct/gradcheck.hpp"
#include "icct/icc.hpp"
#include "icct/mlp.hpp"

namespace fs = std::filesystem;
using icct::json;

namespace {

int thread_cap_from_env() {
    const char* env = std::getenv("ICCT_THREADS");
    if (!env) return 1;
    const int n = std::atoi(env);
    return n > 0 ? n : 1;
}

std::string method_label(icct::TransferKind kind) {
    switch (kind) {
        case icct::TransferKind::None: return "solo";
        case icct::TransferKind::Icc: return "ICCT";
        case icct::TransferKind::Kd: return "KD";
        case icct::TransferKind::Lt: return "LT";
    }
    return "?";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw icct::DataError("cannot open " + path + " for writing");
    os << text;
    if (!os) throw icct::DataError("write failed for " + path);
}

struct RunOutcome {
    std::uint64_t seed = 0;
    double final_test_err = 0.0;
    bool diverged = false;
    double wall_seconds = 0.0;
};

void write_sidecar(const std::string& path, const std::string& command,
                   const std::string& label, const icct::ExperimentConfig& cfg,
                   std::uint64_t seed, const icct::RunReport& report) {
    json side;
    side["command"] = command;
    side["label"] = label;
    side["scenario"] = icct::scenario_name(cfg.scenario);
    side["transfer"] = icct::transfer_name(cfg.transfer);
    side["seed"] = seed;
    side["final_test_err"] = report.final_test_err;
    side["diverged"] = report.diverged;
    side["student_layers"] = cfg.student_spec.layer_sizes;
    if (cfg.teacher_spec) side["teacher_layers"] = cfg.teacher_spec->layer_sizes;
    side["config"] = cfg.echo;
    write_text(path, side.dump(2) + "\n");
}

std::string summary_csv(const std::string& label, const std::vector<RunOutcome>& runs) {
    std::string out = "label,seed,final_test_err\n";
    char buf[128];
    double sum = 0.0;
    for (const auto& r : runs) {
        std::snprintf(buf, sizeof(buf), "%s,%llu,%.6f\n", label.c_str(),
                      static_cast<unsigned long long>(r.seed), r.final_test_err);
        out += buf;
        sum += r.final_test_err;
    }
    std::snprintf(buf, sizeof(buf), "%s,mean,%.6f\n", label.c_str(),
                  sum / static_cast<double>(runs.size()));
    out += buf;
    return out;
}

// Runs one job per seed, at most ICCT_THREADS at a time. Jobs own their
// output files; results land in seed order regardless of thread count.
template <typename Job>
std::vector<RunOutcome> run_per_seed(const std::vector<std::uint64_t>& seeds, Job&& job) {
    std::vector<RunOutcome> results(seeds.size());
    const int cap = std::min<int>(thread_cap_from_env(), static_cast<int>(seeds.size()));
    if (cap <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) results[i] = job(i, seeds[i]);
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(seeds.size());
    for (int w = 0; w < cap; ++w)
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < seeds.size(); i = next.fetch_add(1)) {
                try {
                    results[i] = job(i, seeds[i]);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& w : workers) w.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw icct::DataError("cannot create output directory " + dir + ": " + ec.message());
}

int finish_runs(const std::vector<RunOutcome>& runs) {
    for (const auto& r : runs) {
        std::printf("seed %llu: final test err %.4f%%%s (%.1fs)\n",
                    static_cast<unsigned long long>(r.seed), r.final_test_err,
                    r.diverged ? " [DIVERGED]" : "", r.wall_seconds);
        if (r.diverged) {
            std::fprintf(stderr, "error: training diverged (NaN loss); partial reports kept\n");
            return icct::kExitRun;
        }
    }
    return icct::kExitOk;
}

// ---------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
    std::ifstream is(spec_path);
    if (!is) throw icct::ConfigError("cannot open spec file " + spec_path);
    json doc;
    try {
        doc = json::parse(is);
    } catch (const json::parse_error& e) {
        throw icct::ConfigError(std::string("spec JSON parse error: ") + e.what());
    }
    const icct::SynthSpec spec = icct::detail::parse_synth(doc);
    ensure_out_dir(out_dir);
    const auto [train, test] = icct::gen_synthetic(spec);
    icct::save_csv(out_dir + "/train.csv", train);
    icct::save_csv(out_dir + "/test.csv", test);
    std::printf("wrote %zu train / %zu test samples to %s\n", train.size(), test.size(),
                out_dir.c_str());
    return icct::kExitOk;
}

void require_head_matches(const icct::ExperimentConfig& cfg, const icct::Dataset& train) {
    if (cfg.student_spec.layer_sizes.back() != train.n_classes)
        throw icct::ConfigError("student head has " +
                                std::to_string(cfg.student_spec.layer_sizes.back()) +
                                " classes but data has " + std::to_string(train.n_classes) +
                                " (field: student.layers)");
    if (cfg.student_spec.layer_sizes.front() != train.dim())
        throw icct::ConfigError("student expects input dim " +
                                std::to_string(cfg.student_spec.layer_sizes.front()) +
                                " but data has " + std::to_string(train.dim()) +
                                " (field: student.layers)");
}

int cmd_train(const std::string& config_path) {
    const icct::ExperimentConfig cfg = icct::load_experiment_config(config_path);
    const auto [train, test] = icct::load_config_data(cfg);
    require_head_matches(cfg, train);
    ensure_out_dir(cfg.out_dir);

    const auto runs = run_per_seed(cfg.seeds, [&](std::size_t, std::uint64_t seed) {
        const auto [params, report] =
            icct::train_solo(cfg.student_spec, train, test, cfg.optimizer, cfg.epochs,
                             cfg.batch_size, seed);
        const std::string stem = cfg.out_dir + "/train_seed" + std::to_string(seed);
        icct::write_report_csv(stem + ".csv", report);
        write_sidecar(stem + ".json", "train", "solo", cfg, seed, report);
        icct::save_checkpoint(stem + ".ckpt", params);
        return RunOutcome{seed, report.final_test_err, report.diverged, report.wall_seconds};
    });
    write_text(cfg.out_dir + "/summary_train.csv", summary_csv("solo", runs));
    return finish_runs(runs);
}

icct::DistillConfig distill_config_from(const icct::ExperimentConfig& cfg, std::uint64_t seed) {
    icct::DistillConfig dc;
    dc.transfer = cfg.transfer;
    dc.icc_mode = cfg.icc_mode;
    dc.kd_temperature = cfg.kd_temperature;
    dc.lambda = cfg.lambda;
    dc.scenario = cfg.scenario;
    dc.generations = cfg.generations;
    dc.student_spec = cfg.student_spec;
    if (cfg.teacher_spec) dc.teacher_spec = *cfg.teacher_spec;
    dc.optimizer = cfg.optimizer;
    dc.epochs = cfg.epochs;
    dc.batch_size = cfg.batch_size;
    dc.seed = seed;
    return dc;
}

int cmd_distill(const std::string& config_path, const std::string& teacher_path) {
    const icct::ExperimentConfig cfg = icct::load_experiment_config(config_path);
    const auto [train, test] = icct::load_config_data(cfg);
    const icct::NetworkParams teacher = icct::load_checkpoint(teacher_path);
    if (teacher.n_classes() != train.n_classes)
        throw icct::ConfigError("teacher checkpoint has " + std::to_string(teacher.n_classes()) +
                                " output classes but data has " +
                                std::to_string(train.n_classes) + " (field: teacher.layers)");
    if (teacher.input_dim() != train.dim())
        throw icct::ConfigError("teacher checkpoint expects input dim " +
                                std::to_string(teacher.input_dim()) + " but data has " +
                                std::to_string(train.dim()) + " (field: teacher.layers)");
    require_head_matches(cfg, train);
    ensure_out_dir(cfg.out_dir);

    const std::string label = method_label(cfg.transfer);
    const auto runs = run_per_seed(cfg.seeds, [&](std::size_t, std::uint64_t seed) {
        const auto [params, report] = icct::distill(teacher, distill_config_from(cfg, seed),
                                                    train, test);
        const std::string stem = cfg.out_dir + "/distill_" +
                                 icct::transfer_name(cfg.transfer) + "_seed" +
                                 std::to_string(seed);
        icct::write_report_csv(stem + ".csv", report);
        write_sidecar(stem + ".json", "distill", label, cfg, seed, report);
        icct::save_checkpoint(stem + ".ckpt", params);
        return RunOutcome{seed, report.final_test_err, report.diverged, report.wall_seconds};
    });
    write_text(cfg.out_dir + "/summary_distill_" + icct::transfer_name(cfg.transfer) + ".csv",
               summary_csv(label, runs));
    return finish_runs(runs);
}

int cmd_born_again(const std::string& config_path) {
    const icct::ExperimentConfig cfg = icct::load_experiment_config(config_path);
    const auto [train, test] = icct::load_config_data(cfg);
    require_head_matches(cfg, train);
    ensure_out_dir(cfg.out_dir);

    struct GenRuns {
        std::vector<RunOutcome> runs;
        std::vector<bool> ran;
    };
    std::vector<GenRuns> per_generation(static_cast<std::size_t>(cfg.generations) + 1);
    for (auto& g : per_generation) {
        g.runs.resize(cfg.seeds.size());
        g.ran.assign(cfg.seeds.size(), false);
    }
    bool any_diverged = false;

    run_per_seed(cfg.seeds, [&](std::size_t idx, std::uint64_t seed) {
        icct::DistillConfig dc = distill_config_from(cfg, seed);
        dc.scenario = icct::Scenario::Equal;
        const auto generations = icct::born_again(dc, train, test);
        for (std::size_t g = 0; g < generations.size(); ++g) {
            const auto& [params, report] = generations[g];
            const std::string label = g == 0 ? "Baseline" : "Gen #" + std::to_string(g);
            const std::string stem = cfg.out_dir + "/ba_gen" + std::to_string(g) + "_seed" +
                                     std::to_string(seed);
            icct::write_report_csv(stem + ".csv", report);
            write_sidecar(stem + ".json", "born-again", label, cfg, seed, report);
            icct::save_checkpoint(stem + ".ckpt", params);
            per_generation[g].runs[idx] =
                RunOutcome{seed, report.final_test_err, report.diverged, report.wall_seconds};
            per_generation[g].ran[idx] = true;
        }
        return per_generation[generations.size() - 1].runs[idx];
    });

    // Summary rows cover the generations every seed completed; a
    // diverged run keeps its partial reports but ends its seed's chain.
    std::string summary;
    bool first_block = true;
    for (std::size_t g = 0; g < per_generation.size(); ++g) {
        bool complete = true;
        for (bool ran : per_generation[g].ran) complete &= ran;
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            if (per_generation[g].ran[i]) any_diverged |= per_generation[g].runs[i].diverged;
        if (!complete) continue;
        const std::string label = g == 0 ? "Baseline" : "Gen #" + std::to_string(g);
        const std::string block = summary_csv(label, per_generation[g].runs);
        summary += first_block ? block : block.substr(block.find('\n') + 1);
        first_block = false;
        double sum = 0.0;
        for (const auto& r : per_generation[g].runs) sum += r.final_test_err;
        std::printf("%s: mean test err %.4f%%\n", label.c_str(),
                    sum / static_cast<double>(per_generation[g].runs.size()));
    }
    write_text(cfg.out_dir + "/summary_born_again.csv", summary);
    if (any_diverged) {
        std::fprintf(stderr, "error: a generation diverged; earlier generations kept\n");
        return icct::kExitRun;
    }
    return icct::kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance, double step) {
    const auto reports = icct::check_all(seed, tolerance, step);
    bool all_pass = true;
    std::string worst;
    double worst_err = -1.0;
    for (const auto& r : reports) {
        std::printf("%s\n", icct::format_report_line(r).c_str());
        if (!r.pass && r.max_rel_err > worst_err) {
            worst_err = r.max_rel_err;
            worst = r.target;
        }
        all_pass &= r.pass;
    }
    if (!all_pass) {
        std::fprintf(stderr, "gradcheck FAILED; worst offender: %s (max_rel=%.3e)\n",
                     worst.c_str(), worst_err);
        return icct::kExitNumeric;
    }
    std::printf("gradcheck: all %zu targets pass at tolerance %g\n", reports.size(), tolerance);
    return icct::kExitOk;
}

int cmd_icc_dump(const std::string& checkpoint_path, const std::string& data_path,
                 std::size_t batch_index, std::size_t batch_size, const std::string& out_path) {
    const icct::NetworkParams params = icct::load_checkpoint(checkpoint_path);
    const icct::Dataset ds = icct::load_csv(data_path);
    if (params.input_dim() != ds.dim())
        throw icct::ConfigError("checkpoint expects input dim " +
                                std::to_string(params.input_dim()) + " but data has " +
                                std::to_string(ds.dim()));
    const icct::Batch batch = icct::sequential_batch(ds, batch_size, batch_index);
    const icct::Matrix logits = icct::forward(params, batch.inputs);
    const icct::IccMap map = icct::icc_map_batch(logits);
    write_text(out_path, icct::icc_map_to_csv(map));
    std::printf("wrote %zux%zu ICC map for batch %zu (%zu samples) to %s\n", map.n_classes,
                map.n_classes, batch_index, batch.labels.size(), out_path.c_str());
    return icct::kExitOk;
}

int cmd_report(const std::string& runs_dir, const std::string& out_path) {
    if (!fs::is_directory(runs_dir)) throw icct::UsageError(runs_dir + " is not a directory");
    std::vector<std::string> sidecars;
    for (const auto& entry : fs::directory_iterator(runs_dir))
        if (entry.path().extension() == ".json") sidecars.push_back(entry.path().string());
    if (sidecars.empty())
        throw icct::UsageError("no run sidecars (*.json) found in " + runs_dir);
    std::sort(sidecars.begin(), sidecars.end());

    struct Group {
        std::vector<double> errs;
        json student_layers;
        json teacher_layers;
    };
    std::map<std::pair<std::string, std::string>, Group> groups; // (scenario, label)
    for (const auto& path : sidecars) {
        std::ifstream is(path);
        json side;
        try {
            side = json::parse(is);
        } catch (const json::parse_error& e) {
            throw icct::DataError("bad sidecar " + path + ": " + e.what());
        }
        Group& g = groups[{side.value("scenario", "?"), side.value("label", "?")}];
        g.errs.push_back(side.value("final_test_err", 0.0));
        g.student_layers = side.value("student_layers", json::array());
        g.teacher_layers = side.value("teacher_layers", json::array());
    }

    auto mean_of = [](const std::vector<double>& xs) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s / static_cast<double>(xs.size());
    };
    // Baselines: mean error of solo runs keyed by their layer sizes.
    std::map<std::string, double> solo_by_layers;
    for (const auto& [key, g] : groups)
        if (key.second == "solo") solo_by_layers[g.student_layers.dump()] = mean_of(g.errs);

    std::string out = "scenario,method,s_baseline,t_baseline,err\n";
    char buf[192];
    for (const auto& [key, g] : groups) {
        const auto& [scenario, label] = key;
        auto baseline_str = [&](const json& layers) -> std::string {
            const auto it = solo_by_layers.find(layers.dump());
            if (it == solo_by_layers.end()) return "NA";
            std::snprintf(buf, sizeof(buf), "%.4f", it->second);
            return buf;
        };
        const std::string sb = baseline_str(g.student_layers);
        const std::string tb = g.teacher_layers.empty() ? "NA" : baseline_str(g.teacher_layers);
        std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%.4f\n", scenario.c_str(), label.c_str(),
                      sb.c_str(), tb.c_str(), mean_of(g.errs));
        out += buf;
    }
    write_text(out_path, out);
    std::printf("wrote %zu rows to %s\n", groups.size(), out_path.c_str());
    return icct::kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"icct - inter-class correlation transfer laboratory"};
    app.require_subcommand(1);

    std::string spec_path;
    std::string out_dir;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset as CSV");
    gen->add_option("--spec", spec_path, "synthetic dataset spec (JSON)")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    std::string train_config;
    auto* train = app.add_subcommand("train", "train solo baselines for each seed");
    train->add_option("--config", train_config, "experiment config (JSON)")->required();

    std::string distill_config;
    std::string teacher_path;
    auto* dist = app.add_subcommand("distill", "train students under a frozen teacher");
    dist->add_option("--config", distill_config, "experiment config (JSON)")->required();
    dist->add_option("--teacher", teacher_path, "teacher checkpoint")->required();

    std::string ba_config;
    auto* ba = app.add_subcommand("born-again", "multi-generation self-distillation");
    ba->add_option("--config", ba_config, "experiment config (JSON)")->required();

    std::uint64_t gc_seed = 42;
    double gc_tol = icct::kGradCheckTolerance;
    double gc_step = icct::kGradCheckBatteryStep;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
    gc->add_option("--seed", gc_seed, "battery seed");
    gc->add_option("--tolerance", gc_tol, "max relative error");
    gc->add_option("--step", gc_step, "finite-difference step h");

    std::string dump_ckpt;
    std::string dump_data;
    std::size_t dump_batch = 0;
    std::size_t dump_batch_size = 64;
    std::string dump_out;
    auto* dump = app.add_subcommand("icc-dump", "dump a batch-averaged ICC map as CSV");
    dump->add_option("--checkpoint", dump_ckpt, "network checkpoint")->required();
    dump->add_option("--data", dump_data, "dataset CSV")->required();
    dump->add_option("--batch", dump_batch, "sequential batch index")->required();
    dump->add_option("--batch-size", dump_batch_size, "batch size (default 64)");
    dump->add_option("--out", dump_out, "output CSV path")->required();

    std::string runs_dir;
    std::string report_out = "report.csv";
    auto* rep = app.add_subcommand("report", "aggregate run sidecars into a comparison table");
    rep->add_option("--runs", runs_dir, "directory of run reports")->required();
    rep->add_option("--out", report_out, "output CSV path (default report.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? icct::kExitOk : icct::kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(spec_path, out_dir);
        if (train->parsed()) return cmd_train(train_config);
        if (dist->parsed()) return cmd_distill(distill_config, teacher_path);
        if (ba->parsed()) return cmd_born_again(ba_config);
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_tol, gc_step);
        if (dump->parsed())
            return cmd_icc_dump(dump_ckpt, dump_data, dump_batch, dump_batch_size, dump_out);
        if (rep->parsed()) return cmd_report(runs_dir, report_out);
    } catch (const icct::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return icct::kExitUsage;
    } catch (const icct::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return icct::kExitData;
    } catch (const icct::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return icct::kExitConfig;
    } catch (const icct::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return icct::kExitNumeric;
    } catch (const icct::RunError& e) {
        std::fprintf(stderr, "run error: %s\n", e.what());
        return icct::kExitRun;
    }
    return icct::kExitUsage;
}
