#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "icct/errors.hpp"
#include "icct/matrix.hpp"
#include "icct/rng.hpp"

// Deterministic desk-scale datasets: a Gaussian-mixture generator whose
// overlap pairs create confusable classes, a CSV loader, and the CIFAR-10
// binary loader.

namespace icct {

struct Dataset {
    Matrix features;                 // n x d
    std::vector<std::size_t> labels; // n entries in [0, n_classes)
    std::size_t n_classes = 0;
    std::string split;               // "train" or "test"

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }
};

struct SynthSpec {
    std::size_t n_classes = 10;
    std::size_t dim = 32;
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 200;
    double center_scale = 3.0;
    double noise_stddev = 1.0;
    std::size_t overlap_pairs = 2;
    std::uint64_t seed = 0;
};

inline void validate_synth_spec(const SynthSpec& spec) {
    if (spec.n_classes < 2) throw ConfigError("SynthSpec: need n_classes >= 2");
    if (spec.dim == 0) throw ConfigError("SynthSpec: dim must be >= 1");
    if (spec.train_per_class == 0 || spec.test_per_class == 0)
        throw ConfigError("SynthSpec: per-class counts must be >= 1");
    if (!(spec.noise_stddev > 0.0)) throw ConfigError("SynthSpec: noise_stddev must be > 0");
    if (spec.overlap_pairs * 2 > spec.n_classes)
        throw ConfigError("SynthSpec: overlap_pairs exceed available classes");
}

// Class centers are drawn on a sphere of radius center_scale; then the
// first `overlap_pairs` pairs (0,1), (2,3), ... are pulled toward their
// midpoint until the two centers sit 2*noise_stddev apart, which makes
// those pairs confusable while the rest stay well separated. Samples are
// center + Normal(0, noise_stddev^2) per coordinate. Rows are grouped by
// class; the batcher shuffles.
inline std::pair<Dataset, Dataset> gen_synthetic(const SynthSpec& spec) {
    validate_synth_spec(spec);
    Rng rng(spec.seed);

    std::vector<std::vector<double>> centers(spec.n_classes, std::vector<double>(spec.dim));
    for (auto& c : centers) {
        double norm2 = 0.0;
        for (auto& x : c) {
            x = rng.normal_unit();
            norm2 += x * x;
        }
        const double r = std::sqrt(norm2);
        const double scale = r > 0.0 ? spec.center_scale / r : 0.0;
        for (auto& x : c) x *= scale;
    }
    for (std::size_t p = 0; p < spec.overlap_pairs; ++p) {
        auto& a = centers[2 * p];
        auto& b = centers[2 * p + 1];
        double dist2 = 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j) {
            const double d = a[j] - b[j];
            dist2 += d * d;
        }
        const double dist = std::sqrt(dist2);
        if (dist == 0.0) continue;
        const double target = 2.0 * spec.noise_stddev;
        const double shrink = target / dist;
        for (std::size_t j = 0; j < spec.dim; ++j) {
            const double mid = 0.5 * (a[j] + b[j]);
            a[j] = mid + shrink * (a[j] - mid);
            b[j] = mid + shrink * (b[j] - mid);
        }
    }

    auto sample_split = [&](std::size_t per_class, const char* tag) {
        Dataset ds;
        ds.n_classes = spec.n_classes;
        ds.split = tag;
        ds.features = Matrix(spec.n_classes * per_class, spec.dim);
        ds.labels.resize(spec.n_classes * per_class);
        std::size_t row = 0;
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            for (std::size_t i = 0; i < per_class; ++i, ++row) {
                for (std::size_t j = 0; j < spec.dim; ++j)
                    ds.features(row, j) = centers[c][j] + rng.normal(0.0, spec.noise_stddev);
                ds.labels[row] = c;
            }
        }
        return ds;
    };
    Dataset train = sample_split(spec.train_per_class, "train");
    Dataset test = sample_split(spec.test_per_class, "test");
    return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------
// CSV format: first line "# n_classes=<N> dim=<d>", then one sample per
// line "<f1>,...,<fd>,<label>". Floats printed with 17 significant
// digits so write -> read round-trips are value-exact.
// ---------------------------------------------------------------------

inline void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_csv: cannot open " + path);
    os << "# n_classes=" << ds.n_classes << " dim=" << ds.dim() << "\n";
    char buf[64];
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (std::size_t j = 0; j < ds.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", ds.features(r, j));
            os << buf << ',';
        }
        os << ds.labels[r] << "\n";
    }
    if (!os) throw DataError("save_csv: write failed for " + path);
}

inline Dataset load_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_csv: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("load_csv: empty file " + path);
    std::size_t n_classes = 0;
    std::size_t dim = 0;
    if (std::sscanf(line.c_str(), "# n_classes=%zu dim=%zu", &n_classes, &dim) != 2)
        throw DataError("load_csv: bad header in " + path + " line 1");
    if (n_classes == 0 || dim == 0) throw DataError("load_csv: degenerate header in " + path);

    std::vector<double> values;
    std::vector<std::size_t> labels;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t start = 0;
        std::vector<double> fields;
        fields.reserve(dim + 1);
        while (start <= line.size()) {
            const std::size_t comma = line.find(',', start);
            const std::string tok =
                line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            try {
                std::size_t used = 0;
                fields.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw DataError("load_csv: malformed value '" + tok + "' at " + path + " line " +
                                std::to_string(line_no));
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != dim + 1)
            throw DataError("load_csv: expected " + std::to_string(dim + 1) + " fields, got " +
                            std::to_string(fields.size()) + " at " + path + " line " +
                            std::to_string(line_no));
        const double label_val = fields.back();
        if (label_val < 0 || label_val != std::floor(label_val) ||
            static_cast<std::size_t>(label_val) >= n_classes)
            throw DataError("load_csv: label out of range at " + path + " line " +
                            std::to_string(line_no));
        values.insert(values.end(), fields.begin(), fields.end() - 1);
        labels.push_back(static_cast<std::size_t>(label_val));
    }
    if (labels.empty()) throw DataError("load_csv: no samples in " + path);

    Dataset ds;
    ds.n_classes = n_classes;
    ds.features = Matrix(labels.size(), dim);
    ds.features.data = std::move(values);
    ds.labels = std::move(labels);
    ds.split = "";
    return ds;
}

// ---------------------------------------------------------------------
// CIFAR-10 binary format: records of 1 label byte + 3072 pixel bytes
// (R, G, B planes of a 32x32 image, row-major). Pixels are scaled to
// [0,1] and standardized per channel with train-set statistics.
// ---------------------------------------------------------------------

inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarChannelPixels = 1024;

namespace detail {

inline void read_cifar_batch(const std::string& path, std::vector<double>& features,
                             std::vector<std::size_t>& labels) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw DataError("load_cifar10: cannot open " + path);
    const auto bytes = static_cast<std::size_t>(is.tellg());
    if (bytes == 0 || bytes % kCifarRecordBytes != 0)
        throw DataError("load_cifar10: " + path + " has " + std::to_string(bytes) +
                        " bytes, expected a multiple of " + std::to_string(kCifarRecordBytes) +
                        " (standard batch = " + std::to_string(kCifarRecordBytes * 10000) + ")");
    is.seekg(0);
    const std::size_t records = bytes / kCifarRecordBytes;
    std::vector<unsigned char> rec(kCifarRecordBytes);
    for (std::size_t r = 0; r < records; ++r) {
        is.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
        if (!is) throw DataError("load_cifar10: short read in " + path);
        if (rec[0] > 9) throw DataError("load_cifar10: label byte > 9 in " + path);
        labels.push_back(rec[0]);
        for (std::size_t j = 0; j < kCifarPixels; ++j)
            features.push_back(static_cast<double>(rec[1 + j]) / 255.0);
    }
}

} // namespace detail

// Loads data_batch_{1..5}.bin and test_batch.bin from dir. Per-channel
// standardization uses train-set mean/stddev (population) and is applied
// to both splits.
inline std::pair<Dataset, Dataset> load_cifar10(const std::string& dir) {
    std::vector<double> train_feat;
    std::vector<std::size_t> train_labels;
    for (int i = 1; i <= 5; ++i)
        detail::read_cifar_batch(dir + "/data_batch_" + std::to_string(i) + ".bin", train_feat,
                                 train_labels);
    std::vector<double> test_feat;
    std::vector<std::size_t> test_labels;
    detail::read_cifar_batch(dir + "/test_batch.bin", test_feat, test_labels);

    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
    const std::size_t n_train = train_labels.size();
    for (std::size_t ch = 0; ch < 3; ++ch) {
        double sum = 0.0;
        for (std::size_t r = 0; r < n_train; ++r)
            for (std::size_t j = 0; j < kCifarChannelPixels; ++j)
                sum += train_feat[r * kCifarPixels + ch * kCifarChannelPixels + j];
        const double count = static_cast<double>(n_train * kCifarChannelPixels);
        mean[ch] = sum / count;
        double var = 0.0;
        for (std::size_t r = 0; r < n_train; ++r)
            for (std::size_t j = 0; j < kCifarChannelPixels; ++j) {
                const double d =
                    train_feat[r * kCifarPixels + ch * kCifarChannelPixels + j] - mean[ch];
                var += d * d;
            }
        stddev[ch] = std::sqrt(var / count);
        if (stddev[ch] == 0.0) stddev[ch] = 1.0;
    }
    auto standardize = [&](std::vector<double>& feat, std::size_t n) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t ch = 0; ch < 3; ++ch)
                for (std::size_t j = 0; j < kCifarChannelPixels; ++j) {
                    double& x = feat[r * kCifarPixels + ch * kCifarChannelPixels + j];
                    x = (x - mean[ch]) / stddev[ch];
                }
    };
    standardize(train_feat, n_train);
    standardize(test_feat, test_labels.size());

    auto make = [](std::vector<double>&& feat, std::vector<std::size_t>&& labels,
                   const char* tag) {
        Dataset ds;
        ds.n_classes = 10;
        ds.features = Matrix(labels.size(), kCifarPixels);
        ds.features.data = std::move(feat);
        ds.labels = std::move(labels);
        ds.split = tag;
        return ds;
    };
    return {make(std::move(train_feat), std::move(train_labels), "train"),
            make(std::move(test_feat), std::move(test_labels), "test")};
}

// ---------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------

struct Batch {
    Matrix inputs;
    std::vector<std::size_t> labels;
};

// Epoch-level shuffle by the seeded rng; the final partial batch is kept.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, Rng& rng) {
    if (batch_size == 0) throw ConfigError("batches: batch_size must be >= 1");
    if (ds.size() == 0) throw ConfigError("batches: empty dataset");
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);

    std::vector<Batch> out;
    out.reserve((ds.size() + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, order.size() - start);
        Batch batch;
        batch.inputs = Matrix(count, ds.dim());
        batch.labels.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t src = order[start + i];
            for (std::size_t j = 0; j < ds.dim(); ++j) batch.inputs(i, j) = ds.features(src, j);
            batch.labels[i] = ds.labels[src];
        }
        out.push_back(std::move(batch));
    }
    return out;
}

// Sequential (unshuffled) batch k, used by icc-dump so a batch index is
// reproducible without a seed.
inline Batch sequential_batch(const Dataset& ds, std::size_t batch_size, std::size_t index) {
    if (batch_size == 0) throw ConfigError("sequential_batch: batch_size must be >= 1");
    const std::size_t n_batches = (ds.size() + batch_size - 1) / batch_size;
    if (index >= n_batches)
        throw UsageError("batch index " + std::to_string(index) + " out of range (have " +
                         std::to_string(n_batches) + " batches)");
    const std::size_t start = index * batch_size;
    const std::size_t count = std::min(batch_size, ds.size() - start);
    Batch batch;
    batch.inputs = Matrix(count, ds.dim());
    batch.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j)
            batch.inputs(i, j) = ds.features(start + i, j);
        batch.labels[i] = ds.labels[start + i];
    }
    return batch;
}

// Stratified split: for every class, the trailing `holdout_fraction` of
// its rows (in row order) go to the holdout set. Used for the lambda
// sweep's held-out validation.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double holdout_fraction) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
        throw ConfigError("stratified_split: fraction must be in (0,1)");
    std::vector<std::vector<std::size_t>> by_class(ds.n_classes);
    for (std::size_t r = 0; r < ds.size(); ++r) by_class[ds.labels[r]].push_back(r);
    std::vector<std::size_t> keep;
    std::vector<std::size_t> hold;
    for (const auto& rows : by_class) {
        const std::size_t n_hold = static_cast<std::size_t>(
            std::floor(static_cast<double>(rows.size()) * holdout_fraction));
        const std::size_t n_keep = rows.size() - n_hold;
        for (std::size_t i = 0; i < rows.size(); ++i)
            (i < n_keep ? keep : hold).push_back(rows[i]);
    }
    auto subset = [&](const std::vector<std::size_t>& rows, const char* tag) {
        Dataset out;
        out.n_classes = ds.n_classes;
        out.split = tag;
        out.features = Matrix(rows.size(), ds.dim());
        out.labels.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t j = 0; j < ds.dim(); ++j)
                out.features(i, j) = ds.features(rows[i], j);
            out.labels[i] = ds.labels[rows[i]];
        }
        return out;
    };
    return {subset(keep, "train"), subset(hold, "val")};
}

} // namespace icct
