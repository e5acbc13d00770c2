#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "icct/errors.hpp"
#include "icct/matrix.hpp"

// Knowledge-distillation (softened softmax) and logit-transfer baselines
// with analytic gradients.

namespace icct {

struct KdConfig {
    double temperature = 1.0; // M > 0
};

// Dataset presets for the temperature.
inline constexpr double kKdTemperatureCifar10 = 4.0;
inline constexpr double kKdTemperatureCifar100 = 10.0;

// q = softmax(z / M). Shift-invariant in z, unlike the ICC map.
inline std::vector<double> soften(std::span<const double> logits, const KdConfig& cfg) {
    if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature))
        throw ConfigError("soften: temperature must be finite and > 0");
    if (logits.size() < 2) throw ConfigError("soften: need at least 2 classes");
    std::vector<double> scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / cfg.temperature;
    return stable_softmax(scaled);
}

namespace detail {

inline void check_kd_shapes(const Matrix& student, const Matrix& teacher) {
    if (student.rows != teacher.rows || student.cols != teacher.cols)
        throw ConfigError("kd: student/teacher logit batches must have equal shape");
    if (student.rows == 0) throw ConfigError("kd: empty batch");
}

inline std::vector<double> log_soften(std::span<const double> logits, double temperature) {
    std::vector<double> scaled(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
    return stable_log_softmax(scaled);
}

} // namespace detail

// (1/b) sum_s KL(q_T^s || q_S^s), both sides softened at temperature M.
// No M^2 rescaling: the gradient is then exactly (q_S - q_T)/(bM).
inline double kd_loss(const Matrix& student, const Matrix& teacher, const KdConfig& cfg) {
    detail::check_kd_shapes(student, teacher);
    if (!(cfg.temperature > 0.0)) throw ConfigError("kd_loss: temperature must be > 0");
    double total = 0.0;
    for (std::size_t s = 0; s < student.rows; ++s) {
        const auto log_t = detail::log_soften(teacher.row(s), cfg.temperature);
        const auto log_s = detail::log_soften(student.row(s), cfg.temperature);
        double kl = 0.0;
        for (std::size_t i = 0; i < log_t.size(); ++i) {
            const double p = std::exp(log_t[i]);
            if (p > 0.0) kl += p * (log_t[i] - log_s[i]);
        }
        total += kl;
    }
    return total / static_cast<double>(student.rows);
}

// d kd_loss / d z_{k,S}^s = (q_{k,S}^s - q_{k,T}^s) / (b M). Each student
// logit mimics its teacher counterpart; classes couple only through the
// softmax denominator.
inline Matrix kd_loss_grad(const Matrix& student, const Matrix& teacher, const KdConfig& cfg) {
    detail::check_kd_shapes(student, teacher);
    if (!(cfg.temperature > 0.0)) throw ConfigError("kd_loss_grad: temperature must be > 0");
    const double scale = 1.0 / (static_cast<double>(student.rows) * cfg.temperature);
    Matrix grad(student.rows, student.cols);
    for (std::size_t s = 0; s < student.rows; ++s) {
        const auto q_s = soften(student.row(s), cfg);
        const auto q_t = soften(teacher.row(s), cfg);
        for (std::size_t k = 0; k < student.cols; ++k)
            grad(s, k) = scale * (q_s[k] - q_t[k]);
    }
    return grad;
}

// Logit transfer: mean squared error on raw logits with a 1/2 factor,
// L = (1/(2b)) sum_s ||z_S^s - z_T^s||^2, gradient (z_S - z_T)/b.
inline double lt_loss(const Matrix& student, const Matrix& teacher) {
    detail::check_kd_shapes(student, teacher);
    double total = 0.0;
    for (std::size_t i = 0; i < student.size(); ++i) {
        const double d = student.data[i] - teacher.data[i];
        total += d * d;
    }
    return total / (2.0 * static_cast<double>(student.rows));
}

inline Matrix lt_loss_grad(const Matrix& student, const Matrix& teacher) {
    detail::check_kd_shapes(student, teacher);
    Matrix grad(student.rows, student.cols);
    const double scale = 1.0 / static_cast<double>(student.rows);
    for (std::size_t i = 0; i < student.size(); ++i)
        grad.data[i] = scale * (student.data[i] - teacher.data[i]);
    return grad;
}

} // namespace icct
