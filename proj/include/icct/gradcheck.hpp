#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "icct/errors.hpp"
#include "icct/icc.hpp"
#include "icct/kd.hpp"
#include "icct/matrix.hpp"
#include "icct/mlp.hpp"
#include "icct/rng.hpp"

// Independent finite-difference oracle that adjudicates every analytic
// gradient in the library. The oracle only ever evaluates loss values;
// it never calls an analytic-gradient code path.

namespace icct {

struct GradReport {
    std::string target;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t worst_index = 0;
    bool pass = false;
};

using ScalarFn = std::function<double(const std::vector<double>&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
inline std::vector<double> central_diff(const ScalarFn& f, const std::vector<double>& x,
                                        double h) {
    if (!(h > 0.0)) throw ConfigError("central_diff: h must be > 0");
    std::vector<double> grad(x.size());
    std::vector<double> probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("central_diff: non-finite loss near x");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

// Richardson combination of central differences at h and h/2. The h^2
// truncation term cancels, which matters on coordinates whose true
// gradient is orders of magnitude below the typical entry.
inline std::vector<double> richardson_central_diff(const ScalarFn& f,
                                                   const std::vector<double>& x, double h) {
    const auto coarse = central_diff(f, x, h);
    const auto fine = central_diff(f, x, h / 2.0);
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) grad[i] = (4.0 * fine[i] - coarse[i]) / 3.0;
    return grad;
}

// Relative error with a max(|analytic|, |numeric|, 1e-12) denominator so
// near-zero coordinates do not blow up the ratio.
inline GradReport compare_gradients(const std::string& target,
                                    const std::vector<double>& analytic,
                                    const std::vector<double>& numeric, double tolerance) {
    if (analytic.size() != numeric.size())
        throw ConfigError("compare_gradients: size mismatch for " + target);
    GradReport report;
    report.target = target;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double abs_err = std::abs(analytic[i] - numeric[i]);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-12});
        const double rel_err = abs_err / denom;
        if (abs_err > report.max_abs_err) report.max_abs_err = abs_err;
        if (rel_err > report.max_rel_err) {
            report.max_rel_err = rel_err;
            report.worst_index = i;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

// The battery comparison uses the Richardson form so the verdict is not
// polluted by step-size artifacts; the oracle still only evaluates
// losses.
inline GradReport check_target(const std::string& target, const ScalarFn& loss,
                               const std::vector<double>& analytic, const std::vector<double>& x,
                               double h, double tolerance) {
    return compare_gradients(target, analytic, richardson_central_diff(loss, x, h), tolerance);
}

inline constexpr double kGradCheckStep = 1e-5;        // plain central differences
inline constexpr double kGradCheckBatteryStep = 1e-4; // Richardson pair (h, h/2)
inline constexpr double kGradCheckTolerance = 1e-5;

namespace detail {

inline Matrix random_logits(Rng& rng, std::size_t b, std::size_t n, double scale) {
    Matrix m(b, n);
    for (auto& x : m.data) x = rng.normal(0.0, scale);
    return m;
}

inline Matrix to_matrix(const std::vector<double>& flat, std::size_t b, std::size_t n) {
    Matrix m(b, n);
    m.data = flat;
    return m;
}

struct NetInstance {
    NetworkSpec spec;
    NetworkParams params;
    Matrix inputs;
    std::vector<std::size_t> labels;
    Matrix teacher_logits;
};

inline NetInstance make_net_instance(Rng& rng, std::size_t b, std::size_t n) {
    NetInstance inst;
    const std::size_t d = 6;
    inst.spec.layer_sizes = {d, 16, 12, n};
    inst.spec.seed = rng.next_u64();
    inst.params = init(inst.spec);
    inst.inputs = random_logits(rng, b, d, 1.0);
    inst.labels.resize(b);
    for (auto& l : inst.labels) l = rng.index(n);
    // Teacher logits from an independent random net on the same inputs.
    NetworkSpec teacher_spec;
    teacher_spec.layer_sizes = {d, 12, n};
    teacher_spec.seed = rng.next_u64();
    inst.teacher_logits = forward(init(teacher_spec), inst.inputs);
    return inst;
}

} // namespace detail

// Fixed battery of gradient checks on seeded random instances:
// logit-level gradients (ICC both modes, KD, LT, CE) on
// b in {1,4,8} x N in {2,5,16}, plus end-to-end parameter gradients of
// CE + lambda * {ICC, KD, LT} through a small ReLU network, plus the
// hand-derived b=1 N=2 fixture.
inline std::vector<GradReport> check_all(std::uint64_t seed, double tolerance,
                                         double h = kGradCheckBatteryStep) {
    std::vector<GradReport> reports;
    Rng rng(seed);
    const std::size_t batch_sizes[] = {1, 4, 8};
    const std::size_t class_counts[] = {2, 5, 16};
    const KdConfig kd_cfg{4.0};

    auto tag = [](const std::string& name, std::size_t b, std::size_t n) {
        return name + " b=" + std::to_string(b) + " N=" + std::to_string(n);
    };

    for (std::size_t b : batch_sizes) {
        for (std::size_t n : class_counts) {
            const Matrix student = detail::random_logits(rng, b, n, 1.2);
            const Matrix teacher = detail::random_logits(rng, b, n, 1.2);

            for (IccLossMode mode :
                 {IccLossMode::PerSampleMeanKL, IccLossMode::AveragedMapKL}) {
                const char* mode_name =
                    mode == IccLossMode::PerSampleMeanKL ? "icc[per_sample]" : "icc[averaged_map]";
                auto loss = [&, mode](const std::vector<double>& flat) {
                    return icc_loss(detail::to_matrix(flat, b, n), teacher, mode);
                };
                reports.push_back(check_target(tag(mode_name, b, n), loss,
                                               icc_loss_grad(student, teacher, mode).data,
                                               student.data, h, tolerance));
            }
            {
                auto loss = [&](const std::vector<double>& flat) {
                    return kd_loss(detail::to_matrix(flat, b, n), teacher, kd_cfg);
                };
                reports.push_back(check_target(tag("kd[M=4]", b, n), loss,
                                               kd_loss_grad(student, teacher, kd_cfg).data,
                                               student.data, h, tolerance));
            }
            {
                auto loss = [&](const std::vector<double>& flat) {
                    return lt_loss(detail::to_matrix(flat, b, n), teacher);
                };
                reports.push_back(check_target(tag("lt", b, n), loss,
                                               lt_loss_grad(student, teacher).data, student.data,
                                               h, tolerance));
            }
            {
                std::vector<std::size_t> labels(b);
                for (auto& l : labels) l = rng.index(n);
                auto loss = [&](const std::vector<double>& flat) {
                    return ce_loss_and_grad(detail::to_matrix(flat, b, n), labels).first;
                };
                reports.push_back(check_target(tag("ce", b, n), loss,
                                               ce_loss_and_grad(student, labels).second.data,
                                               student.data, h, tolerance));
            }
        }
    }

    // Hand-derived fixture: b=1, N=2, teacher (0,0), student (1,0).
    {
        const Matrix student = Matrix::from_rows({{1.0, 0.0}});
        const Matrix teacher = Matrix::from_rows({{0.0, 0.0}});
        auto loss = [&](const std::vector<double>& flat) {
            return icc_loss(detail::to_matrix(flat, 1, 2), teacher, IccLossMode::PerSampleMeanKL);
        };
        reports.push_back(check_target(
            "icc[per_sample] fixture b=1 N=2", loss,
            icc_loss_grad(student, teacher, IccLossMode::PerSampleMeanKL).data, student.data, h,
            tolerance));
    }

    // End-to-end parameter gradients for each composite objective, over
    // the same b x N grid.
    const double lambda = 3.0;
    enum class Objective { Ce, CeIccPerSample, CeIccAveraged, CeKd, CeLt };
    const std::pair<Objective, const char*> objectives[] = {
        {Objective::Ce, "net ce"},
        {Objective::CeIccPerSample, "net ce+icc[per_sample]"},
        {Objective::CeIccAveraged, "net ce+icc[averaged_map]"},
        {Objective::CeKd, "net ce+kd"},
        {Objective::CeLt, "net ce+lt"},
    };
    auto check_net_instance = [&](std::size_t b, std::size_t n) {
        const detail::NetInstance inst = detail::make_net_instance(rng, b, n);
        for (const auto& [objective, name] : objectives) {
            auto transfer_terms = [&, objective](const Matrix& logits) {
                double extra = 0.0;
                Matrix extra_grad(logits.rows, logits.cols);
                switch (objective) {
                    case Objective::Ce:
                        break;
                    case Objective::CeIccPerSample:
                        extra = icc_loss(logits, inst.teacher_logits, IccLossMode::PerSampleMeanKL);
                        extra_grad =
                            icc_loss_grad(logits, inst.teacher_logits, IccLossMode::PerSampleMeanKL);
                        break;
                    case Objective::CeIccAveraged:
                        extra = icc_loss(logits, inst.teacher_logits, IccLossMode::AveragedMapKL);
                        extra_grad =
                            icc_loss_grad(logits, inst.teacher_logits, IccLossMode::AveragedMapKL);
                        break;
                    case Objective::CeKd:
                        extra = kd_loss(logits, inst.teacher_logits, kd_cfg);
                        extra_grad = kd_loss_grad(logits, inst.teacher_logits, kd_cfg);
                        break;
                    case Objective::CeLt:
                        extra = lt_loss(logits, inst.teacher_logits);
                        extra_grad = lt_loss_grad(logits, inst.teacher_logits);
                        break;
                }
                return std::make_pair(extra, std::move(extra_grad));
            };

            NetworkParams probe = inst.params;
            auto loss = [&](const std::vector<double>& flat) {
                unflatten_params(flat, probe);
                const Matrix logits = forward(probe, inst.inputs);
                const double ce = ce_loss_and_grad(logits, inst.labels).first;
                return ce + lambda * transfer_terms(logits).first;
            };

            ForwardCache cache;
            const Matrix logits = forward(inst.params, inst.inputs, &cache);
            auto [ce, dlogits] = ce_loss_and_grad(logits, inst.labels);
            (void)ce;
            auto [extra, extra_grad] = transfer_terms(logits);
            (void)extra;
            for (std::size_t i = 0; i < dlogits.size(); ++i)
                dlogits.data[i] += lambda * extra_grad.data[i];
            const NetworkParams grads = backward(inst.params, cache, dlogits);

            reports.push_back(check_target(tag(name, b, n), loss, flatten_params(grads),
                                           flatten_params(inst.params), h, tolerance));
        }
    };
    for (std::size_t b : batch_sizes)
        for (std::size_t n : class_counts) check_net_instance(b, n);
    return reports;
}

inline std::string format_report_line(const GradReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s  %-34s max_rel=%.3e max_abs=%.3e worst=%zu",
                  r.pass ? "PASS" : "FAIL", r.target.c_str(), r.max_rel_err, r.max_abs_err,
                  r.worst_index);
    return buf;
}

} // namespace icct
