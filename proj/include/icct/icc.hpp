#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "icct/errors.hpp"
#include "icct/matrix.hpp"

// Inter-class correlation (ICC) knowledge: per-sample and batch-averaged
// correlation maps over the logits, the ICCT transfer loss, and its
// analytic gradient with respect to the student logits.
//
// The map for one sample is the dot-product self-attention of the logit
// vector with itself: A = z z^T, normalized by a softmax over all N*N
// entries. It is symmetric, nonnegative, sums to 1, and is invariant
// under a global sign flip of z. There is deliberately no temperature
// anywhere in this module: the map is meant to measure the correlation
// structure, not to reshape it.

namespace icct {

// N x N normalized self-attention matrix. entries(i,j) >= 0, total sum 1,
// entries(i,j) == entries(j,i).
struct IccMap {
    std::size_t n_classes = 0;
    Matrix entries; // N x N probabilities
};

// The transfer loss comes in two readings that coincide for batch size 1
// and differ otherwise:
//   PerSampleMeanKL:  (1/b) sum_s KL(map_T^s || map_S^s); matches the
//                      per-sample terms that appear in the analytic
//                      gradient, and is the default used for training.
//   AveragedMapKL:    KL(avg_T || avg_S) on the batch-averaged maps.
enum class IccLossMode { PerSampleMeanKL, AveragedMapKL };

namespace detail {

// log of the per-sample map as a flat N*N vector: z_u*z_v - logsumexp.
// Always finite for finite logits, even when probabilities underflow.
inline std::vector<double> icc_log_map_flat(std::span<const double> logits) {
    const std::size_t n = logits.size();
    std::vector<double> a(n * n);
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = 0; v < n; ++v) a[u * n + v] = logits[u] * logits[v];
    return stable_log_softmax(a);
}

inline void check_same_shape(const Matrix& student, const Matrix& teacher) {
    if (student.rows != teacher.rows || student.cols != teacher.cols)
        throw ConfigError("icc: student/teacher logit batches must have equal shape");
    if (student.rows == 0) throw ConfigError("icc: empty batch");
    if (student.cols < 2) throw ConfigError("icc: need at least 2 classes");
}

} // namespace detail

// Map for a single logit vector: softmax over the N^2 entries of z z^T.
inline IccMap icc_map_per_sample(std::span<const double> logits) {
    const std::size_t n = logits.size();
    if (n < 2) throw ConfigError("icc_map_per_sample: need at least 2 classes");
    const auto log_map = detail::icc_log_map_flat(logits);
    IccMap map;
    map.n_classes = n;
    map.entries = Matrix(n, n);
    for (std::size_t i = 0; i < n * n; ++i) map.entries.data[i] = std::exp(log_map[i]);
    return map;
}

// Arithmetic mean of the per-sample maps over a b x N logit batch.
// Fixed summation order (sample 0 first) for bit-stable results.
inline IccMap icc_map_batch(const Matrix& logit_batch) {
    if (logit_batch.rows == 0) throw ConfigError("icc_map_batch: empty batch");
    const std::size_t n = logit_batch.cols;
    if (n < 2) throw ConfigError("icc_map_batch: need at least 2 classes");
    IccMap acc;
    acc.n_classes = n;
    acc.entries = Matrix(n, n);
    for (std::size_t s = 0; s < logit_batch.rows; ++s) {
        const auto log_map = detail::icc_log_map_flat(logit_batch.row(s));
        for (std::size_t i = 0; i < n * n; ++i) acc.entries.data[i] += std::exp(log_map[i]);
    }
    const double inv_b = 1.0 / static_cast<double>(logit_batch.rows);
    for (auto& x : acc.entries.data) x *= inv_b;
    return acc;
}

// KL(teacher map || student map). Teacher logits are constants: no
// gradient is ever produced for them. Computed in log space so the
// result stays finite for arbitrarily saturated logits.
inline double icc_loss(const Matrix& student, const Matrix& teacher, IccLossMode mode) {
    detail::check_same_shape(student, teacher);
    const std::size_t b = student.rows;
    const std::size_t n = student.cols;
    const std::size_t nn = n * n;

    if (mode == IccLossMode::PerSampleMeanKL) {
        double total = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
            const auto log_t = detail::icc_log_map_flat(teacher.row(s));
            const auto log_s = detail::icc_log_map_flat(student.row(s));
            double kl = 0.0;
            for (std::size_t i = 0; i < nn; ++i) {
                const double p = std::exp(log_t[i]);
                if (p > 0.0) kl += p * (log_t[i] - log_s[i]);
            }
            total += kl;
        }
        return total / static_cast<double>(b);
    }

    // AveragedMapKL: log of the averaged map via a per-entry logsumexp
    // over samples, log avg_uv = lse_s(log map^s_uv) - log b.
    auto log_avg = [&](const Matrix& logits) {
        std::vector<std::vector<double>> per_sample(b);
        for (std::size_t s = 0; s < b; ++s)
            per_sample[s] = detail::icc_log_map_flat(logits.row(s));
        std::vector<double> out(nn);
        std::vector<double> col(b);
        for (std::size_t i = 0; i < nn; ++i) {
            for (std::size_t s = 0; s < b; ++s) col[s] = per_sample[s][i];
            out[i] = log_sum_exp(col) - std::log(static_cast<double>(b));
        }
        return out;
    };
    const auto log_t = log_avg(teacher);
    const auto log_s = log_avg(student);
    double kl = 0.0;
    for (std::size_t i = 0; i < nn; ++i) {
        const double p = std::exp(log_t[i]);
        if (p > 0.0) kl += p * (log_t[i] - log_s[i]);
    }
    return kl;
}

// Analytic gradient of icc_loss with respect to the student logits.
//
// PerSampleMeanKL: d/dz_k^s = (2/b) sum_i z_i^s (mapS^s_ik - mapT^s_ik).
// The z_i^s factor is the "belief weight": the student scales each
// class's teacher-student gap by its own confidence in class i.
//
// AveragedMapKL: chain rule through the averaged map. With
// R_uv = avgT_uv / avgS_uv and per-sample map m = mapS^s,
//   d/dz_k^s = (2/b) [ (sum_uv R_uv m_uv) * (sum_i z_i m_ik)
//                      - sum_i z_i R_ik m_ik ].
// Implemented with D = R - 1 (expm1 of the log ratio) after applying
// the exact identity sum_uv m_uv = 1, which reduces the bracket to
// (sum_uv D_uv m_uv)(sum_i z_i m_ik) - sum_i z_i D_ik m_ik and makes
// the gradient exactly zero when student == teacher.
// Both modes are validated against central finite differences.
inline Matrix icc_loss_grad(const Matrix& student, const Matrix& teacher, IccLossMode mode) {
    detail::check_same_shape(student, teacher);
    const std::size_t b = student.rows;
    const std::size_t n = student.cols;
    const std::size_t nn = n * n;
    Matrix grad(b, n);
    const double scale = 2.0 / static_cast<double>(b);

    if (mode == IccLossMode::PerSampleMeanKL) {
        for (std::size_t s = 0; s < b; ++s) {
            const auto log_s = detail::icc_log_map_flat(student.row(s));
            const auto log_t = detail::icc_log_map_flat(teacher.row(s));
            const auto z = student.row(s);
            for (std::size_t k = 0; k < n; ++k) {
                double g = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    g += z[i] * (std::exp(log_s[i * n + k]) - std::exp(log_t[i * n + k]));
                grad(s, k) = scale * g;
            }
        }
        return grad;
    }

    // Averaged mode: build log avg maps once, then R in log space.
    std::vector<std::vector<double>> log_maps_s(b);
    std::vector<std::vector<double>> log_maps_t(b);
    for (std::size_t s = 0; s < b; ++s) {
        log_maps_s[s] = detail::icc_log_map_flat(student.row(s));
        log_maps_t[s] = detail::icc_log_map_flat(teacher.row(s));
    }
    const double log_b = std::log(static_cast<double>(b));
    std::vector<double> log_ratio(nn); // log(avgT_uv) - log(avgS_uv)
    {
        std::vector<double> col_s(b);
        std::vector<double> col_t(b);
        for (std::size_t i = 0; i < nn; ++i) {
            for (std::size_t s = 0; s < b; ++s) {
                col_s[s] = log_maps_s[s][i];
                col_t[s] = log_maps_t[s][i];
            }
            log_ratio[i] = (log_sum_exp(col_t) - log_b) - (log_sum_exp(col_s) - log_b);
        }
    }
    for (std::size_t s = 0; s < b; ++s) {
        const auto z = student.row(s);
        std::vector<double> m(nn);
        for (std::size_t i = 0; i < nn; ++i) m[i] = std::exp(log_maps_s[s][i]);
        double weighted_excess = 0.0; // sum_uv (R_uv - 1) m_uv
        for (std::size_t i = 0; i < nn; ++i) weighted_excess += std::expm1(log_ratio[i]) * m[i];
        for (std::size_t k = 0; k < n; ++k) {
            double w = 0.0; // sum_i z_i m_ik
            double t = 0.0; // sum_i z_i (R_ik - 1) m_ik
            for (std::size_t i = 0; i < n; ++i) {
                const double mik = m[i * n + k];
                w += z[i] * mik;
                t += z[i] * std::expm1(log_ratio[i * n + k]) * mik;
            }
            grad(s, k) = scale * (weighted_excess * w - t);
        }
    }
    return grad;
}

// Per-sample decomposition of the gradient: addends(k, i) is
// z_i^s (mapS^s_ik - mapT^s_ik), so that the belief-weight structure is
// inspectable. Row sums times 2/b reproduce icc_loss_grad for the
// per-sample mode.
inline std::vector<Matrix> belief_weight_report(const Matrix& student, const Matrix& teacher) {
    detail::check_same_shape(student, teacher);
    const std::size_t b = student.rows;
    const std::size_t n = student.cols;
    std::vector<Matrix> report;
    report.reserve(b);
    for (std::size_t s = 0; s < b; ++s) {
        const auto log_s = detail::icc_log_map_flat(student.row(s));
        const auto log_t = detail::icc_log_map_flat(teacher.row(s));
        const auto z = student.row(s);
        Matrix addends(n, n);
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i)
                addends(k, i) =
                    z[i] * (std::exp(log_s[i * n + k]) - std::exp(log_t[i * n + k]));
        report.push_back(std::move(addends));
    }
    return report;
}

// CSV form consumed by external heatmap tooling: header
// "class_i,class_j,value", N^2 rows, 9 significant digits.
inline std::string icc_map_to_csv(const IccMap& map) {
    std::string out = "class_i,class_j,value\n";
    char buf[96];
    for (std::size_t i = 0; i < map.n_classes; ++i)
        for (std::size_t j = 0; j < map.n_classes; ++j) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g\n", i, j, map.entries(i, j));
            out += buf;
        }
    return out;
}

inline IccMap icc_map_from_csv_text(const std::string& text) {
    std::vector<std::tuple<std::size_t, std::size_t, double>> rows;
    std::size_t pos = text.find('\n');
    if (pos == std::string::npos || text.substr(0, pos) != "class_i,class_j,value")
        throw DataError("icc map csv: bad header");
    std::size_t max_class = 0;
    while (pos != std::string::npos && pos + 1 < text.size()) {
        const std::size_t end = text.find('\n', pos + 1);
        const std::string line =
            text.substr(pos + 1, end == std::string::npos ? std::string::npos : end - pos - 1);
        pos = end;
        if (line.empty()) continue;
        std::size_t i = 0;
        std::size_t j = 0;
        double v = 0.0;
        if (std::sscanf(line.c_str(), "%zu,%zu,%lg", &i, &j, &v) != 3)
            throw DataError("icc map csv: malformed row '" + line + "'");
        rows.emplace_back(i, j, v);
        max_class = std::max({max_class, i, j});
    }
    IccMap map;
    map.n_classes = max_class + 1;
    if (rows.size() != map.n_classes * map.n_classes)
        throw DataError("icc map csv: expected N^2 rows");
    map.entries = Matrix(map.n_classes, map.n_classes);
    for (const auto& [i, j, v] : rows) map.entries(i, j) = v;
    return map;
}

// KL(p || q) between two stored maps, used when comparing dumped maps.
// Entries that underflowed to zero contribute their limit value.
inline double kl_between_maps(const IccMap& p, const IccMap& q) {
    if (p.n_classes != q.n_classes) throw ConfigError("kl_between_maps: size mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.entries.size(); ++i) {
        const double pi = p.entries.data[i];
        const double qi = q.entries.data[i];
        if (pi > 0.0) kl += pi * (std::log(pi) - std::log(qi));
    }
    return kl;
}

} // namespace icct
