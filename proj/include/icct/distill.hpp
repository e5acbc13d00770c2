#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "icct/datasets.hpp"
#include "icct/errors.hpp"
#include "icct/icc.hpp"
#include "icct/kd.hpp"
#include "icct/matrix.hpp"
#include "icct/mlp.hpp"
#include "icct/rng.hpp"

// Teacher-student training orchestration: solo (cross-entropy only)
// baselines, single-teacher distillation with any of the transfer
// losses, and multi-generation born-again self-distillation.

namespace icct {

enum class TransferKind { None, Icc, Kd, Lt };
enum class Scenario { TeacherLarger, Equal, TeacherSmaller };

struct DistillConfig {
    TransferKind transfer = TransferKind::None;
    IccLossMode icc_mode = IccLossMode::PerSampleMeanKL;
    double kd_temperature = kKdTemperatureCifar10;
    double lambda = 0.0;
    Scenario scenario = Scenario::TeacherLarger;
    int generations = 1; // Equal scenario only
    NetworkSpec teacher_spec;
    NetworkSpec student_spec;
    OptimizerConfig optimizer;
    int epochs = 1;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

inline void validate_distill_config(const DistillConfig& cfg) {
    if (cfg.lambda < 0.0) throw ConfigError("DistillConfig: lambda must be >= 0");
    if (cfg.scenario == Scenario::Equal && cfg.generations < 1)
        throw ConfigError("DistillConfig: generations must be >= 1");
    if (cfg.epochs < 0) throw ConfigError("DistillConfig: epochs must be >= 0");
    if (cfg.batch_size == 0) throw ConfigError("DistillConfig: batch_size must be >= 1");
    if (cfg.transfer == TransferKind::Kd && !(cfg.kd_temperature > 0.0))
        throw ConfigError("DistillConfig: KD temperature must be > 0");
    validate_optimizer(cfg.optimizer);
}

inline const char* transfer_name(TransferKind kind) {
    switch (kind) {
        case TransferKind::None: return "none";
        case TransferKind::Icc: return "icc";
        case TransferKind::Kd: return "kd";
        case TransferKind::Lt: return "lt";
    }
    return "?";
}

inline const char* scenario_name(Scenario s) {
    switch (s) {
        case Scenario::TeacherLarger: return "teacher_larger";
        case Scenario::Equal: return "equal";
        case Scenario::TeacherSmaller: return "teacher_smaller";
    }
    return "?";
}

struct EpochRecord {
    int epoch = 0; // 0 = state before training
    double train_err = 0.0;
    double test_err = 0.0;
    double label_loss = 0.0;
    double transfer_loss = 0.0;
    double total_loss = 0.0; // label + lambda * transfer, tracked in-loop
};

struct RunReport {
    std::vector<EpochRecord> epochs;
    double final_test_err = 0.0;
    bool diverged = false;
    double wall_seconds = 0.0;
    std::string label; // e.g. "solo", "icc", "gen1"

    std::string to_csv() const {
        std::string out = "epoch,train_err,test_err,label_loss,transfer_loss\n";
        char buf[160];
        for (const auto& r : epochs) {
            std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.9e,%.9e\n", r.epoch, r.train_err,
                          r.test_err, r.label_loss, r.transfer_loss);
            out += buf;
        }
        return out;
    }
};

inline void write_report_csv(const std::string& path, const RunReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("write_report_csv: cannot open " + path);
    os << report.to_csv();
    if (!os) throw DataError("write_report_csv: write failed for " + path);
}

// Error percent under argmax prediction; ties break toward the lowest
// class index.
inline double evaluate(const NetworkParams& params, const Dataset& ds) {
    if (ds.size() == 0) return 0.0;
    const Matrix logits = forward(params, ds.features);
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
        std::size_t best = 0;
        double best_val = logits(r, 0);
        for (std::size_t c = 1; c < logits.cols; ++c)
            if (logits(r, c) > best_val) {
                best_val = logits(r, c);
                best = c;
            }
        if (best != ds.labels[r]) ++wrong;
    }
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(ds.size());
}

namespace detail {

inline std::size_t argmax_row(const Matrix& m, std::size_t r) {
    std::size_t best = 0;
    double best_val = m(r, 0);
    for (std::size_t c = 1; c < m.cols; ++c)
        if (m(r, c) > best_val) {
            best_val = m(r, c);
            best = c;
        }
    return best;
}

// Shared training loop. With teacher == nullptr or lambda == 0 the
// transfer path is skipped entirely, so a lambda=0 distillation run is
// bit-identical to a solo run under the same seed.
inline std::pair<NetworkParams, RunReport> run_training(
    const NetworkSpec& student_spec, const Dataset& train, const Dataset& test,
    const OptimizerConfig& opt, int epochs, std::size_t batch_size, std::uint64_t seed,
    const NetworkParams* teacher, TransferKind transfer, IccLossMode icc_mode,
    double kd_temperature, double lambda) {
    const auto t0 = std::chrono::steady_clock::now();
    validate_optimizer(opt);
    if (train.n_classes < 2) throw ConfigError("run_training: need at least 2 classes");
    const bool use_transfer =
        teacher != nullptr && transfer != TransferKind::None && lambda != 0.0;
    if (use_transfer && teacher->n_classes() != train.n_classes)
        throw ConfigError("run_training: teacher has " + std::to_string(teacher->n_classes()) +
                          " output classes, data has " + std::to_string(train.n_classes));

    NetworkSpec spec = student_spec;
    spec.seed = seed;
    NetworkParams params = init(spec);
    OptimizerState state = OptimizerState::like(params);
    Rng rng(seed ^ 0x5DEECE66DULL); // batch-order stream, separate from init

    RunReport report;
    report.epochs.push_back({0, evaluate(params, train), evaluate(params, test), 0.0, 0.0, 0.0});

    const KdConfig kd_cfg{kd_temperature};
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        double label_loss_sum = 0.0;
        double transfer_loss_sum = 0.0;
        double total_loss_sum = 0.0;
        std::size_t train_wrong = 0;
        bool diverged = false;

        for (const Batch& batch : batches(train, batch_size, rng)) {
            ForwardCache cache;
            const Matrix logits = forward(params, batch.inputs, &cache);
            if (!logits.all_finite()) {
                diverged = true;
                break;
            }
            auto [ce, dlogits] = ce_loss_and_grad(logits, batch.labels);
            double transfer_loss = 0.0;
            if (use_transfer) {
                const Matrix teacher_logits = forward(*teacher, batch.inputs);
                Matrix tgrad;
                switch (transfer) {
                    case TransferKind::Icc:
                        transfer_loss = icc_loss(logits, teacher_logits, icc_mode);
                        tgrad = icc_loss_grad(logits, teacher_logits, icc_mode);
                        break;
                    case TransferKind::Kd:
                        transfer_loss = kd_loss(logits, teacher_logits, kd_cfg);
                        tgrad = kd_loss_grad(logits, teacher_logits, kd_cfg);
                        break;
                    case TransferKind::Lt:
                        transfer_loss = lt_loss(logits, teacher_logits);
                        tgrad = lt_loss_grad(logits, teacher_logits);
                        break;
                    case TransferKind::None:
                        break;
                }
                for (std::size_t i = 0; i < dlogits.size(); ++i)
                    dlogits.data[i] += lambda * tgrad.data[i];
            }
            const double batch_total = ce + lambda * transfer_loss;
            if (!std::isfinite(batch_total)) {
                diverged = true;
                break;
            }
            const double weight = static_cast<double>(batch.labels.size());
            label_loss_sum += ce * weight;
            transfer_loss_sum += transfer_loss * weight;
            total_loss_sum += batch_total * weight;
            for (std::size_t r = 0; r < logits.rows; ++r)
                if (argmax_row(logits, r) != batch.labels[r]) ++train_wrong;

            const NetworkParams grads = backward(params, cache, dlogits);
            step(params, grads, state, opt, epoch);
        }

        const double n = static_cast<double>(train.size());
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_err = 100.0 * static_cast<double>(train_wrong) / n;
        rec.test_err = evaluate(params, test);
        rec.label_loss = label_loss_sum / n;
        rec.transfer_loss = transfer_loss_sum / n;
        rec.total_loss = total_loss_sum / n;
        report.epochs.push_back(rec);
        if (diverged) {
            report.diverged = true;
            break;
        }
    }

    report.final_test_err = report.epochs.back().test_err;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(params), std::move(report)};
}

} // namespace detail

// Cross-entropy-only baseline training (the S(B)/T(B) rows).
inline std::pair<NetworkParams, RunReport> train_solo(const NetworkSpec& spec,
                                                      const Dataset& train, const Dataset& test,
                                                      const OptimizerConfig& opt, int epochs,
                                                      std::size_t batch_size,
                                                      std::uint64_t seed) {
    auto result = detail::run_training(spec, train, test, opt, epochs, batch_size, seed, nullptr,
                                       TransferKind::None, IccLossMode::PerSampleMeanKL, 1.0, 0.0);
    result.second.label = "solo";
    return result;
}

// Distillation from a frozen teacher. Per batch the teacher runs forward
// only; the total logit gradient is CE + lambda * transfer, where the
// transfer uses the full mini-batch.
inline std::pair<NetworkParams, RunReport> distill(const NetworkParams& teacher,
                                                   const DistillConfig& cfg, const Dataset& train,
                                                   const Dataset& test) {
    validate_distill_config(cfg);
    auto result = detail::run_training(cfg.student_spec, train, test, cfg.optimizer, cfg.epochs,
                                       cfg.batch_size, cfg.seed, &teacher, cfg.transfer,
                                       cfg.icc_mode, cfg.kd_temperature, cfg.lambda);
    result.second.label = transfer_name(cfg.transfer);
    return result;
}

// Born-again self-distillation: entry 0 is the solo baseline, entry k>0
// is generation k distilled from generation k-1 with a freshly
// initialized student (seed offset by the generation index).
inline std::vector<std::pair<NetworkParams, RunReport>> born_again(const DistillConfig& cfg,
                                                                   const Dataset& train,
                                                                   const Dataset& test) {
    validate_distill_config(cfg);
    std::vector<std::pair<NetworkParams, RunReport>> generations;
    generations.push_back(train_solo(cfg.student_spec, train, test, cfg.optimizer, cfg.epochs,
                                     cfg.batch_size, cfg.seed));
    generations.back().second.label = "baseline";
    if (generations.back().second.diverged) return generations;
    for (int g = 1; g <= cfg.generations; ++g) {
        DistillConfig gen_cfg = cfg;
        gen_cfg.seed = cfg.seed + static_cast<std::uint64_t>(g);
        auto next = distill(generations.back().first, gen_cfg, train, test);
        next.second.label = "gen" + std::to_string(g);
        const bool diverged = next.second.diverged;
        generations.push_back(std::move(next));
        if (diverged) break;
    }
    return generations;
}

// Picks lambda from a logarithmic grid by held-out validation: trains
// one student per candidate on the sub-train split and keeps the
// candidate with the lowest validation error (ties -> smaller lambda).
inline double sweep_lambda(const NetworkParams& teacher, const DistillConfig& base,
                           const std::vector<double>& grid, const Dataset& sub_train,
                           const Dataset& holdout) {
    if (grid.empty()) throw ConfigError("sweep_lambda: empty grid");
    double best_lambda = grid.front();
    double best_err = 1e300;
    for (double lambda : grid) {
        DistillConfig cfg = base;
        cfg.lambda = lambda;
        const auto [params, report] = distill(teacher, cfg, sub_train, holdout);
        if (report.diverged) continue;
        const double err = report.final_test_err;
        if (err < best_err) {
            best_err = err;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

} // namespace icct
