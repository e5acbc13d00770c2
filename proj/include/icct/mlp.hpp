#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icct/errors.hpp"
#include "icct/matrix.hpp"
#include "icct/rng.hpp"

// Fully-connected ReLU networks with a cross-entropy head, exact
// backpropagation, and the two training protocols (Nesterov SGD, Adam).
// The final layer emits raw logits; softmax lives in the losses.

namespace icct {

struct NetworkSpec {
    std::vector<std::size_t> layer_sizes; // input dim ... N classes
    std::uint64_t seed = 0;
};

struct DenseLayer {
    Matrix weight;            // out x in
    std::vector<double> bias; // out
};

struct NetworkParams {
    std::vector<DenseLayer> layers;

    std::size_t n_classes() const {
        return layers.empty() ? 0 : layers.back().weight.rows;
    }
    std::size_t input_dim() const {
        return layers.empty() ? 0 : layers.front().weight.cols;
    }
};

inline void validate_spec(const NetworkSpec& spec) {
    if (spec.layer_sizes.size() < 2)
        throw ConfigError("NetworkSpec: need at least input and output sizes");
    for (std::size_t s : spec.layer_sizes)
        if (s == 0) throw ConfigError("NetworkSpec: zero-sized layer");
    if (spec.layer_sizes.back() < 2)
        throw ConfigError("NetworkSpec: need at least 2 output classes");
}

// He initialization: weights ~ Normal(0, sqrt(2/fan_in)), biases zero.
// Draw order is layer by layer, row-major, so the stream is reproducible.
inline NetworkParams init(const NetworkSpec& spec) {
    validate_spec(spec);
    Rng rng(spec.seed);
    NetworkParams params;
    for (std::size_t l = 0; l + 1 < spec.layer_sizes.size(); ++l) {
        const std::size_t fan_in = spec.layer_sizes[l];
        const std::size_t fan_out = spec.layer_sizes[l + 1];
        DenseLayer layer;
        layer.weight = Matrix(fan_out, fan_in);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& w : layer.weight.data) w = rng.normal(0.0, stddev);
        layer.bias.assign(fan_out, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

// Activations recorded by forward() for the exact backward pass.
struct ForwardCache {
    Matrix input;            // b x d
    std::vector<Matrix> pre; // pre-activation per layer, b x out
    std::vector<Matrix> act; // post-ReLU per hidden layer, b x out
};

// Affine -> ReLU per hidden layer, final affine produces logits.
inline Matrix forward(const NetworkParams& params, const Matrix& inputs, ForwardCache* cache = nullptr) {
    if (params.layers.empty()) throw ConfigError("forward: empty network");
    if (inputs.cols != params.input_dim())
        throw ConfigError("forward: input width " + std::to_string(inputs.cols) +
                          " does not match network input dim " +
                          std::to_string(params.input_dim()));
    if (cache) {
        cache->input = inputs;
        cache->pre.clear();
        cache->act.clear();
    }
    Matrix act = inputs;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const DenseLayer& layer = params.layers[l];
        Matrix pre = matmul(act, transpose(layer.weight));
        for (std::size_t r = 0; r < pre.rows; ++r)
            for (std::size_t c = 0; c < pre.cols; ++c) pre(r, c) += layer.bias[c];
        const bool is_last = (l + 1 == params.layers.size());
        if (cache) cache->pre.push_back(pre);
        if (is_last) return pre;
        for (auto& x : pre.data) x = x > 0.0 ? x : 0.0;
        if (cache) cache->act.push_back(pre);
        act = std::move(pre);
    }
    return act; // unreachable
}

// Mean cross-entropy over the batch and its logit gradient
// (softmax(z) - onehot)/b.
inline std::pair<double, Matrix> ce_loss_and_grad(const Matrix& logits,
                                                  std::span<const std::size_t> labels) {
    if (labels.size() != logits.rows)
        throw ConfigError("ce_loss_and_grad: label count does not match batch size");
    const std::size_t b = logits.rows;
    const std::size_t n = logits.cols;
    double loss = 0.0;
    Matrix grad(b, n);
    for (std::size_t s = 0; s < b; ++s) {
        if (labels[s] >= n)
            throw DataError("ce_loss_and_grad: label " + std::to_string(labels[s]) +
                            " out of range for " + std::to_string(n) + " classes");
        const auto log_probs = stable_log_softmax(logits.row(s));
        loss -= log_probs[labels[s]];
        for (std::size_t k = 0; k < n; ++k)
            grad(s, k) = std::exp(log_probs[k]) / static_cast<double>(b);
        grad(s, labels[s]) -= 1.0 / static_cast<double>(b);
    }
    return {loss / static_cast<double>(b), std::move(grad)};
}

// Exact gradients for every weight and bias given dLoss/dLogits. The
// upstream gradient may be any sum of loss-gradient sources (CE, ICC,
// KD, LT) evaluated at the cached logits.
inline NetworkParams backward(const NetworkParams& params, const ForwardCache& cache,
                              const Matrix& dlogits) {
    if (cache.pre.size() != params.layers.size())
        throw UsageError("backward: cache does not match network (stale cache?)");
    if (dlogits.rows != cache.pre.back().rows || dlogits.cols != cache.pre.back().cols)
        throw UsageError("backward: upstream gradient shape does not match cached logits");
    NetworkParams grads;
    grads.layers.resize(params.layers.size());

    Matrix dpre = dlogits;
    for (std::size_t l = params.layers.size(); l-- > 0;) {
        const Matrix& below = (l == 0) ? cache.input : cache.act[l - 1];
        DenseLayer& g = grads.layers[l];
        g.weight = matmul(transpose(dpre), below); // out x in
        g.bias.assign(dpre.cols, 0.0);
        for (std::size_t r = 0; r < dpre.rows; ++r)
            for (std::size_t c = 0; c < dpre.cols; ++c) g.bias[c] += dpre(r, c);
        if (l == 0) break;
        Matrix dact = matmul(dpre, params.layers[l].weight); // b x in
        const Matrix& pre_below = cache.pre[l - 1];
        for (std::size_t i = 0; i < dact.size(); ++i)
            if (pre_below.data[i] <= 0.0) dact.data[i] = 0.0;
        dpre = std::move(dact);
    }
    return grads;
}

// ---------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------

enum class OptimizerKind { SgdNesterov, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::SgdNesterov;
    double learning_rate = 0.1;
    double weight_decay = 0.0;
    double momentum = 0.0; // SGD only
    // (epoch, multiplier): the learning rate is multiplied by every
    // multiplier whose epoch <= current epoch (epochs are 1-based).
    std::vector<std::pair<int, double>> schedule;
    // Adam moment decays; standard defaults.
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

inline void validate_optimizer(const OptimizerConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw ConfigError("optimizer: learning_rate must be > 0");
    for (const auto& [epoch, mult] : cfg.schedule)
        if (!(mult > 0.0)) throw ConfigError("optimizer: schedule multipliers must be > 0");
}

inline double scheduled_learning_rate(const OptimizerConfig& cfg, int epoch) {
    double lr = cfg.learning_rate;
    for (const auto& [e, mult] : cfg.schedule)
        if (epoch >= e) lr *= mult;
    return lr;
}

struct OptimizerState {
    std::vector<DenseLayer> momentum; // SGD velocity / Adam first moment
    std::vector<DenseLayer> second;   // Adam second moment
    long step_count = 0;

    static OptimizerState like(const NetworkParams& params) {
        OptimizerState st;
        auto zeros = [&] {
            std::vector<DenseLayer> zs;
            for (const auto& layer : params.layers) {
                DenseLayer z;
                z.weight = Matrix(layer.weight.rows, layer.weight.cols);
                z.bias.assign(layer.bias.size(), 0.0);
                zs.push_back(std::move(z));
            }
            return zs;
        };
        st.momentum = zeros();
        st.second = zeros();
        return st;
    }
};

namespace detail {

template <typename Update>
void for_each_param(NetworkParams& params, const NetworkParams& grads, OptimizerState& state,
                    Update&& update) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto& w = params.layers[l].weight.data;
        const auto& gw = grads.layers[l].weight.data;
        auto& mw = state.momentum[l].weight.data;
        auto& vw = state.second[l].weight.data;
        for (std::size_t i = 0; i < w.size(); ++i) update(w[i], gw[i], mw[i], vw[i]);
        auto& b = params.layers[l].bias;
        const auto& gb = grads.layers[l].bias;
        auto& mb = state.momentum[l].bias;
        auto& vb = state.second[l].bias;
        for (std::size_t i = 0; i < b.size(); ++i) update(b[i], gb[i], mb[i], vb[i]);
    }
}

} // namespace detail

// One optimizer step. Weight decay enters as an additive gradient term
// (g + wd * theta). SGD uses the Nesterov form v = m*v + g,
// theta -= lr * (g + m*v); Adam uses bias-corrected moments.
inline void step(NetworkParams& params, const NetworkParams& grads, OptimizerState& state,
                 const OptimizerConfig& cfg, int epoch) {
    if (grads.layers.size() != params.layers.size())
        throw ConfigError("step: gradient shape does not match parameters");
    const double lr = scheduled_learning_rate(cfg, epoch);
    state.step_count += 1;
    if (cfg.kind == OptimizerKind::SgdNesterov) {
        const double m = cfg.momentum;
        const double wd = cfg.weight_decay;
        detail::for_each_param(params, grads, state,
                               [lr, m, wd](double& p, double g, double& vel, double&) {
                                   const double gd = g + wd * p;
                                   vel = m * vel + gd;
                                   p -= lr * (gd + m * vel);
                               });
    } else {
        const double b1 = cfg.adam_beta1;
        const double b2 = cfg.adam_beta2;
        const double eps = cfg.adam_eps;
        const double wd = cfg.weight_decay;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
        detail::for_each_param(params, grads, state,
                               [=](double& p, double g, double& m1, double& m2) {
                                   const double gd = g + wd * p;
                                   m1 = b1 * m1 + (1.0 - b1) * gd;
                                   m2 = b2 * m2 + (1.0 - b2) * gd * gd;
                                   const double mhat = m1 / bc1;
                                   const double vhat = m2 / bc2;
                                   p -= lr * mhat / (std::sqrt(vhat) + eps);
                               });
    }
}

// ---------------------------------------------------------------------
// Parameter vector helpers (used by the finite-difference oracle)
// ---------------------------------------------------------------------

inline std::size_t param_count(const NetworkParams& params) {
    std::size_t n = 0;
    for (const auto& layer : params.layers) n += layer.weight.size() + layer.bias.size();
    return n;
}

inline std::vector<double> flatten_params(const NetworkParams& params) {
    std::vector<double> flat;
    flat.reserve(param_count(params));
    for (const auto& layer : params.layers) {
        flat.insert(flat.end(), layer.weight.data.begin(), layer.weight.data.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
}

inline void unflatten_params(std::span<const double> flat, NetworkParams& params) {
    std::size_t pos = 0;
    for (auto& layer : params.layers) {
        for (auto& w : layer.weight.data) w = flat[pos++];
        for (auto& b : layer.bias) b = flat[pos++];
    }
    if (pos != flat.size()) throw ConfigError("unflatten_params: size mismatch");
}

// ---------------------------------------------------------------------
// Checkpoint file: binary, little-endian. Header = magic "ICCT",
// format version u32, layer count u32; then per layer rows u32, cols
// u32, row-major f64 weights, f64 biases. Round-trips are bit-exact.
// ---------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(buf), 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char buf[4];
    is.read(reinterpret_cast<char*>(buf), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

inline void write_f64s(std::ostream& os, std::span<const double> xs) {
    for (double x : xs) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(x));
        std::memcpy(&bits, &x, sizeof(bits));
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
        os.write(reinterpret_cast<const char*>(buf), 8);
    }
}

inline void read_f64s(std::istream& is, std::span<double> xs) {
    for (double& x : xs) {
        unsigned char buf[8];
        is.read(reinterpret_cast<char*>(buf), 8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
        std::memcpy(&x, &bits, sizeof(x));
    }
}

} // namespace detail

inline void save_checkpoint(const std::string& path, const NetworkParams& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("save_checkpoint: cannot open " + path);
    os.write("ICCT", 4);
    detail::write_u32(os, kCheckpointVersion);
    detail::write_u32(os, static_cast<std::uint32_t>(params.layers.size()));
    for (const auto& layer : params.layers) {
        detail::write_u32(os, static_cast<std::uint32_t>(layer.weight.rows));
        detail::write_u32(os, static_cast<std::uint32_t>(layer.weight.cols));
        detail::write_f64s(os, layer.weight.data);
        detail::write_f64s(os, layer.bias);
    }
    if (!os) throw DataError("save_checkpoint: write failed for " + path);
}

inline NetworkParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "ICCT")
        throw DataError("load_checkpoint: bad magic in " + path);
    const std::uint32_t version = detail::read_u32(is);
    if (version != kCheckpointVersion)
        throw DataError("load_checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t n_layers = detail::read_u32(is);
    NetworkParams params;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const std::uint32_t rows = detail::read_u32(is);
        const std::uint32_t cols = detail::read_u32(is);
        if (!is || rows == 0 || cols == 0)
            throw DataError("load_checkpoint: corrupt layer header in " + path);
        DenseLayer layer;
        layer.weight = Matrix(rows, cols);
        detail::read_f64s(is, layer.weight.data);
        layer.bias.assign(rows, 0.0);
        detail::read_f64s(is, layer.bias);
        if (!is) throw DataError("load_checkpoint: truncated file " + path);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

} // namespace icct
