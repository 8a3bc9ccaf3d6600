#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "magspike/behavior.hpp"
#include "magspike/errors.hpp"
#include "magspike/parallel.hpp"
#include "magspike/rng.hpp"

// Temporally encoded stochastic network: weighted synaptic sums drive the
// activation g(.) whose output is the expected P lifetime (the mean time to
// fire). Training minimizes the KL divergence between the firing-time
// distribution and per-class exponential targets; inference picks the
// earliest (expected or sampled) firing neuron.
namespace magspike {

struct Matrix {
    std::size_t rows = 0; // fan-in
    std::size_t cols = 0; // fan-out
    std::vector<double> data; // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

struct Network {
    std::vector<Matrix> weights; // weights[l] maps layer l activations to l+1
    ActivationFit activation;
    double t_norm = 0.0; // hidden spike time to voltage conversion [s/V]

    void validate() const {
        if (weights.empty()) throw InvalidInput("Network: no layers");
        for (std::size_t l = 0; l + 1 < weights.size(); ++l)
            if (weights[l].cols != weights[l + 1].rows)
                throw InvalidInput("Network: layer " + std::to_string(l) +
                                   " fan-out != layer " + std::to_string(l + 1) + " fan-in");
        for (const auto& w : weights)
            for (double v : w.data)
                if (!std::isfinite(v)) throw InvalidInput("Network: non-finite weight");
        activation.validate();
        if (!(t_norm > 0.0)) throw InvalidInput("Network: t_norm must be positive");
    }

    std::size_t input_size() const { return weights.front().rows; }
    std::size_t output_size() const { return weights.back().cols; }
    std::size_t hidden_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < weights.size(); ++l) n += weights[l].cols;
        return n;
    }
};

// Per-class target lifetimes: the labeled class fires at t1, the rest at t2.
struct TargetSpec {
    double t1 = 0.0;
    double t2 = 0.0;

    void validate() const {
        if (!(0.0 < t1 && t1 < t2)) throw InvalidInput("TargetSpec: need 0 < t1 < t2");
    }
    double lambda(std::size_t neuron, std::size_t label) const {
        return neuron == label ? t1 : t2;
    }
};

struct TrainConfig {
    double learning_rate = 0.0;
    std::size_t epochs = 0;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    double init_scale = 1.0;
    unsigned n_threads = 0; // 0 = hardware concurrency

    void validate() const {
        if (!(learning_rate >= 0.0)) throw InvalidInput("TrainConfig: learning_rate must be >= 0");
        if (batch_size < 1) throw InvalidInput("TrainConfig: batch_size must be >= 1");
        if (!(init_scale > 0.0)) throw InvalidInput("TrainConfig: init_scale must be positive");
    }
};

struct InferenceResult {
    std::size_t predicted = 0;
    std::vector<double> z;           // expected output lifetimes [s]
    std::vector<double> spike_times; // sampled k-th spike per output neuron (stochastic)
    std::size_t spikes_used = 0;
};

// KL divergence between Exp(z) and Exp(lambda) firing-time distributions:
// the closed form of the integral over [0, inf).
inline double kl_loss(double z, double lambda) {
    if (!(z > 0.0 && lambda > 0.0)) throw InvalidInput("kl_loss: need z, lambda > 0");
    return std::log(z / lambda) + lambda / z - 1.0;
}

// dL/dz of the closed form.
inline double kl_grad(double z, double lambda) {
    if (!(z > 0.0 && lambda > 0.0)) throw InvalidInput("kl_grad: need z, lambda > 0");
    return 1.0 / z - lambda / (z * z);
}

struct LayerState {
    std::vector<double> v1; // pre-activation voltages [V]
    std::vector<double> z;  // expected lifetimes [s]
};

namespace detail {

// out[k] = sum_i w[i,k] * in[i] + bias
inline void affine_forward(const Matrix& w, std::span<const double> in,
                           std::span<double> out, double bias) {
    std::fill(out.begin(), out.end(), bias);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double hi = in[i];
        const double* wr = w.data.data() + i * w.cols;
        for (std::size_t k = 0; k < w.cols; ++k) out[k] += wr[k] * hi;
    }
}

} // namespace detail

// Deterministic pass: v1 = W^T h + vref per layer, z = g(v1), and
// h = z / t_norm feeding the next layer. The constant vref shift keeps an
// untrained zero-mean network in the middle of the activation domain.
inline std::vector<LayerState> forward(const Network& net, std::span<const double> input) {
    if (input.size() != net.input_size())
        throw InvalidInput("forward: input size " + std::to_string(input.size()) +
                           " != fan-in " + std::to_string(net.input_size()));
    std::vector<LayerState> states(net.weights.size());
    std::vector<double> h(input.begin(), input.end());
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        const Matrix& w = net.weights[l];
        states[l].v1.resize(w.cols);
        states[l].z.resize(w.cols);
        detail::affine_forward(w, h, states[l].v1, net.activation.vref);
        for (std::size_t k = 0; k < w.cols; ++k)
            states[l].z[k] = g(states[l].v1[k], net.activation);
        if (l + 1 < net.weights.size()) {
            h.resize(w.cols);
            for (std::size_t k = 0; k < w.cols; ++k) h[k] = states[l].z[k] / net.t_norm;
        }
    }
    return states;
}

inline double loss_total(const Network& net, std::span<const double> input,
                         std::size_t label, const TargetSpec& targets) {
    const auto states = forward(net, input);
    const auto& z = states.back().z;
    if (label >= z.size()) throw InvalidInput("loss_total: label out of range");
    double loss = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) loss += kl_loss(z[k], targets.lambda(k, label));
    return loss;
}

namespace detail {

// Backprop through g and the time-to-voltage conversion; accumulates into
// grads and returns the sample loss.
inline double backward_accumulate(const Network& net, std::span<const double> input,
                                  std::size_t label, const TargetSpec& targets,
                                  std::vector<Matrix>& grads) {
    const std::size_t n_layers = net.weights.size();
    const auto states = forward(net, input);
    const auto& z_out = states.back().z;
    if (label >= z_out.size()) throw InvalidInput("backward: label out of range");

    double loss = 0.0;
    std::vector<double> delta(z_out.size()); // dL/dv1 of the current layer
    for (std::size_t k = 0; k < z_out.size(); ++k) {
        const double lam = targets.lambda(k, label);
        loss += kl_loss(z_out[k], lam);
        delta[k] = kl_grad(z_out[k], lam) * g_prime(states.back().v1[k], net.activation);
    }

    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& w = net.weights[l];
        Matrix& gw = grads[l];
        // activation feeding this layer
        std::vector<double> h_prev;
        std::span<const double> h;
        if (l == 0) {
            h = input;
        } else {
            const auto& z_prev = states[l - 1].z;
            h_prev.resize(z_prev.size());
            for (std::size_t i = 0; i < z_prev.size(); ++i) h_prev[i] = z_prev[i] / net.t_norm;
            h = h_prev;
        }
        for (std::size_t i = 0; i < w.rows; ++i) {
            const double hi = h[i];
            double* gr = gw.data.data() + i * w.cols;
            for (std::size_t k = 0; k < w.cols; ++k) gr[k] += delta[k] * hi;
        }
        if (l > 0) {
            std::vector<double> delta_prev(w.rows);
            for (std::size_t i = 0; i < w.rows; ++i) {
                const double* wr = w.data.data() + i * w.cols;
                double s = 0.0;
                for (std::size_t k = 0; k < w.cols; ++k) s += wr[k] * delta[k];
                delta_prev[i] = s * (1.0 / net.t_norm) *
                                g_prime(states[l - 1].v1[i], net.activation);
            }
            delta = std::move(delta_prev);
        }
    }
    return loss;
}

} // namespace detail

// Gradients of loss_total with respect to every weight matrix.
inline std::vector<Matrix> backward(const Network& net, std::span<const double> input,
                                    std::size_t label, const TargetSpec& targets) {
    std::vector<Matrix> grads;
    grads.reserve(net.weights.size());
    for (const auto& w : net.weights) grads.emplace_back(w.rows, w.cols);
    detail::backward_accumulate(net, input, label, targets, grads);
    return grads;
}

// Drive vectors plus labels; the h0 of the first layer.
struct DriveDataset {
    std::size_t dim = 0;
    std::vector<double> drives; // row-major [n x dim]
    std::vector<std::uint8_t> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return {drives.data() + i * dim, dim}; }
};

// Uniform weights in [-init_scale/sqrt(fan_in), +init_scale/sqrt(fan_in)),
// one derived stream per layer.
inline Network init_network(const std::vector<std::size_t>& layer_sizes,
                            const ActivationFit& activation, double t_norm,
                            const TrainConfig& cfg) {
    if (layer_sizes.size() < 2) throw InvalidInput("init_network: need >= 2 layer sizes");
    Network net;
    net.activation = activation;
    net.t_norm = t_norm;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        Matrix w(layer_sizes[l], layer_sizes[l + 1]);
        rng::RandomStream rs(rng::derive_seed(cfg.seed, "init", l));
        const double s = cfg.init_scale / std::sqrt(static_cast<double>(w.rows));
        for (auto& v : w.data) v = (2.0 * rs.uniform() - 1.0) * s;
        net.weights.push_back(std::move(w));
    }
    net.validate();
    return net;
}

inline std::size_t argmin_index(std::span<const double> xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] < xs[best]) best = i;
    return best;
}

// Expected-time inference: earliest mean firing time wins, ties to the
// lowest index.
inline InferenceResult infer_software(const Network& net, std::span<const double> input) {
    const auto states = forward(net, input);
    InferenceResult res;
    res.z = states.back().z;
    res.predicted = argmin_index(res.z);
    return res;
}

// Stochastic inference: hidden neurons contribute their sampled first spike
// time (converted to a voltage), output neurons race to their k-th spike.
inline InferenceResult infer_stochastic(const Network& net, std::span<const double> input,
                                        std::size_t k, std::uint64_t seed) {
    if (k == 0) throw InvalidInput("infer_stochastic: k must be >= 1");
    if (input.size() != net.input_size())
        throw InvalidInput("infer_stochastic: input size mismatch");
    InferenceResult res;
    std::vector<double> h(input.begin(), input.end());
    for (std::size_t l = 0; l + 1 < net.weights.size(); ++l) {
        const Matrix& w = net.weights[l];
        std::vector<double> v1(w.cols);
        detail::affine_forward(w, h, v1, net.activation.vref);
        h.resize(w.cols);
        const std::string tag = "hidden-" + std::to_string(l);
        for (std::size_t j = 0; j < w.cols; ++j) {
            rng::RandomStream rs(rng::derive_seed(seed, tag, j));
            const double zj = g(v1[j], net.activation);
            h[j] = rs.exponential(zj) / net.t_norm;
        }
        res.spikes_used += w.cols;
    }
    const Matrix& w_out = net.weights.back();
    std::vector<double> v1(w_out.cols);
    detail::affine_forward(w_out, h, v1, net.activation.vref);
    res.z.resize(w_out.cols);
    res.spike_times.resize(w_out.cols);
    for (std::size_t j = 0; j < w_out.cols; ++j) {
        rng::RandomStream rs(rng::derive_seed(seed, "output", j));
        res.z[j] = g(v1[j], net.activation);
        const auto train = sample_spike_train(res.z[j], net.activation, k, rs);
        res.spike_times[j] = train.spike_times.back();
    }
    res.spikes_used += k * w_out.cols;
    res.predicted = argmin_index(res.spike_times);
    return res;
}

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0; // NaN when no test set was given
};

// Mean argmin accuracy over a dataset (integer reduction, thread-safe and
// order independent).
inline double software_accuracy(const Network& net, const DriveDataset& data,
                                unsigned n_threads = 0) {
    if (data.size() == 0) throw InvalidInput("software_accuracy: empty dataset");
    std::vector<std::uint8_t> correct(data.size(), 0);
    parallel_for(data.size(), [&](std::size_t i) {
        correct[i] = infer_software(net, data.row(i)).predicted == data.labels[i] ? 1 : 0;
    }, n_threads);
    std::size_t hits = 0;
    for (auto c : correct) hits += c;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

// Mini-batch gradient descent with mean-gradient updates. Deterministic for
// a fixed (seed, thread count): samples are striped across threads and the
// per-thread partial gradients are reduced in thread order.
inline std::vector<EpochMetrics> train(Network& net, const DriveDataset& train_set,
                                       const DriveDataset* test_set,
                                       const TargetSpec& targets, const TrainConfig& cfg) {
    cfg.validate();
    targets.validate();
    net.validate();
    if (train_set.size() == 0) throw InvalidInput("train: empty dataset");
    if (train_set.dim != net.input_size())
        throw InvalidInput("train: dataset dim != network fan-in");

    const unsigned n_threads = cfg.n_threads != 0
                                   ? cfg.n_threads
                                   : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<std::vector<Matrix>> partials(n_threads);
    std::vector<double> partial_loss(n_threads, 0.0);
    for (auto& p : partials)
        for (const auto& w : net.weights) p.emplace_back(w.rows, w.cols);

    std::vector<EpochMetrics> metrics;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng::RandomStream shuffle_rs(rng::derive_seed(cfg.seed, "shuffle", epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rs.next_u64() % i]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t batch_n = std::min(cfg.batch_size, order.size() - start);
            for (unsigned t = 0; t < n_threads; ++t) {
                for (auto& m : partials[t]) m.fill(0.0);
                partial_loss[t] = 0.0;
            }
            parallel_for(n_threads, [&](std::size_t t) {
                for (std::size_t b = t; b < batch_n; b += n_threads) {
                    const std::size_t idx = order[start + b];
                    partial_loss[t] += detail::backward_accumulate(
                        net, train_set.row(idx), train_set.labels[idx], targets, partials[t]);
                }
            }, n_threads);

            double batch_loss = 0.0;
            for (unsigned t = 0; t < n_threads; ++t) batch_loss += partial_loss[t];
            if (!std::isfinite(batch_loss))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch offset " + std::to_string(start));
            epoch_loss += batch_loss;

            const double step = cfg.learning_rate / static_cast<double>(batch_n);
            for (std::size_t l = 0; l < net.weights.size(); ++l) {
                double* w = net.weights[l].data.data();
                for (unsigned t = 0; t < n_threads; ++t) {
                    const double* gp = partials[t][l].data.data();
                    for (std::size_t i = 0; i < net.weights[l].data.size(); ++i)
                        w[i] -= step * gp[i];
                }
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = epoch_loss / static_cast<double>(train_set.size());
        em.test_accuracy = test_set != nullptr
                               ? software_accuracy(net, *test_set, n_threads)
                               : std::numeric_limits<double>::quiet_NaN();
        metrics.push_back(em);
    }
    return metrics;
}

} // namespace magspike
