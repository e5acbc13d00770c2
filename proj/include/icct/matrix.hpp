#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "icct/errors.hpp"

namespace icct {

// Dense row-major matrix of doubles. Double precision throughout: the
// gradient checks need ~1e-6 relative accuracy, which single precision
// cannot deliver.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rws) {
        Matrix m;
        m.rows = rws.size();
        m.cols = rws.size() ? rws.begin()->size() : 0;
        m.data.reserve(m.rows * m.cols);
        for (const auto& r : rws) {
            if (r.size() != m.cols) throw ConfigError("Matrix::from_rows: ragged rows");
            m.data.insert(m.data.end(), r.begin(), r.end());
        }
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(),
                           [](double x) { return std::isfinite(x); });
    }
};

// Standard product with a fixed summation order: every output entry
// accumulates over k in ascending order, so results are bit-stable and
// match the naive triple loop exactly.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows)
        throw ConfigError("matmul: dimension mismatch (" + std::to_string(a.rows) + "x" +
                          std::to_string(a.cols) + " * " + std::to_string(b.rows) + "x" +
                          std::to_string(b.cols) + ")");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* orow = out.data.data() + i * b.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline Matrix transpose(const Matrix& m) {
    Matrix out(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
    return out;
}

// log(sum(exp(v))) with max-subtraction. Shift-invariant and overflow
// safe for arbitrarily large finite inputs.
inline double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw ConfigError("log_sum_exp: empty input");
    double mx = v[0];
    for (double x : v) {
        if (std::isnan(x)) throw NumericError("log_sum_exp: NaN input");
        mx = std::max(mx, x);
    }
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

// softmax(v) computed as exp(v - max) / sum; entries in [0,1], sum 1.
inline std::vector<double> stable_softmax(std::span<const double> v) {
    if (v.empty()) throw ConfigError("stable_softmax: empty input");
    double mx = v[0];
    for (double x : v) {
        if (std::isnan(x)) throw NumericError("stable_softmax: NaN input");
        mx = std::max(mx, x);
    }
    std::vector<double> out(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        s += out[i];
    }
    for (auto& x : out) x /= s;
    return out;
}

// log-softmax: v - log_sum_exp(v). Always finite for finite input, which
// makes KL divergences safe even when probabilities underflow to 0.
inline std::vector<double> stable_log_softmax(std::span<const double> v) {
    const double lse = log_sum_exp(v);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
    return out;
}

} // namespace icct
