#pragma once

// Small dense MLP with batched forward and reverse-mode backward passes.
//
// Parameters live in one contiguous vector: for each layer the weight matrix
// (row-major, out x in) followed by its bias.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chiller/errors.hpp"

namespace chiller::nn {

enum class Activation { Tanh, Relu };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::Relu;
    throw ConfigError("unknown activation '" + s + "'");
}

struct MlpArch {
    std::size_t input = 0;
    std::vector<std::size_t> hidden{64, 64};
    std::size_t output = 0;
    Activation activation = Activation::Tanh;

    [[nodiscard]] std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input};
        w.insert(w.end(), hidden.begin(), hidden.end());
        w.push_back(output);
        return w;
    }
    [[nodiscard]] std::size_t layers() const noexcept { return hidden.size() + 1; }
    [[nodiscard]] std::size_t param_count() const {
        const auto w = widths();
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) n += w[l + 1] * w[l] + w[l + 1];
        return n;
    }
    bool operator==(const MlpArch&) const = default;
};

inline void validate(const MlpArch& a) {
    if (a.input == 0 || a.output == 0) throw ConfigError("mlp: input and output widths must be > 0");
    for (auto h : a.hidden)
        if (h == 0) throw ConfigError("mlp: hidden widths must be > 0");
}

struct Mlp {
    MlpArch arch;
    std::vector<double> params;
};

/// Gaussian init with std gain/sqrt(fan_in) for hidden layers and output_gain/sqrt(fan_in) for the last layer.
inline Mlp make_mlp(const MlpArch& arch, std::mt19937_64& rng, double output_gain = 1.0, double hidden_gain = 1.0) {
    validate(arch);
    Mlp m{arch, std::vector<double>(arch.param_count(), 0.0)};
    std::normal_distribution<double> n01(0.0, 1.0);
    const auto w = arch.widths();
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        const double gain = l + 2 == w.size() ? output_gain : hidden_gain;
        const double sd = gain / std::sqrt(static_cast<double>(w[l]));
        for (std::size_t k = 0; k < w[l + 1] * w[l]; ++k) m.params[off + k] = sd * n01(rng);
        off += w[l + 1] * w[l] + w[l + 1];
    }
    return m;
}

inline void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite value");
}

/// Activations of every layer for a batch; acts[0] is the input, acts.back() the output.
struct MlpCache {
    std::size_t batch = 0;
    std::vector<std::vector<double>> acts;

    [[nodiscard]] std::span<const double> output() const { return acts.back(); }
};

inline void forward(const Mlp& m, std::span<const double> x, std::size_t batch, MlpCache& cache) {
    const auto w = m.arch.widths();
    if (x.size() != batch * w.front()) throw ContractError("mlp forward: input size mismatch");
    cache.batch = batch;
    cache.acts.resize(w.size());
    cache.acts[0].assign(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        const std::size_t in = w[l], out = w[l + 1];
        const double* W = m.params.data() + off;
        const double* b = W + out * in;
        const auto& a = cache.acts[l];
        auto& z = cache.acts[l + 1];
        z.assign(batch * out, 0.0);
        const bool last = l + 2 == w.size();
        for (std::size_t s = 0; s < batch; ++s) {
            const double* xi = a.data() + s * in;
            double* zo = z.data() + s * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double* row = W + o * in;
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += row[i] * xi[i];
                if (!last) acc = m.arch.activation == Activation::Tanh ? std::tanh(acc) : (acc > 0.0 ? acc : 0.0);
                zo[o] = acc;
            }
        }
        off += out * in + out;
    }
}

/// Accumulates dLoss/dparams into `grad` given dLoss/doutput for the cached batch.
inline void backward(const Mlp& m, const MlpCache& cache, std::span<const double> grad_out, std::span<double> grad) {
    const auto w = m.arch.widths();
    const std::size_t batch = cache.batch;
    if (grad.size() != m.params.size()) throw ContractError("mlp backward: gradient size mismatch");
    if (grad_out.size() != batch * w.back()) throw ContractError("mlp backward: output gradient size mismatch");

    std::vector<std::size_t> offsets(w.size() - 1);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        offsets[l] = off;
        off += w[l + 1] * w[l] + w[l + 1];
    }

    std::vector<double> delta(grad_out.begin(), grad_out.end());
    std::vector<double> prev;
    for (std::size_t l = w.size() - 1; l-- > 0;) {
        const std::size_t in = w[l], out = w[l + 1];
        const double* W = m.params.data() + offsets[l];
        double* gW = grad.data() + offsets[l];
        double* gb = gW + out * in;
        const auto& a = cache.acts[l];
        for (std::size_t s = 0; s < batch; ++s) {
            const double* xi = a.data() + s * in;
            const double* d = delta.data() + s * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double g = d[o];
                if (g == 0.0) continue;
                double* row = gW + o * in;
                for (std::size_t i = 0; i < in; ++i) row[i] += g * xi[i];
                gb[o] += g;
            }
        }
        if (l == 0) break;
        prev.assign(batch * in, 0.0);
        for (std::size_t s = 0; s < batch; ++s) {
            const double* d = delta.data() + s * out;
            double* p = prev.data() + s * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double g = d[o];
                if (g == 0.0) continue;
                const double* row = W + o * in;
                for (std::size_t i = 0; i < in; ++i) p[i] += g * row[i];
            }
            // prev holds dL/da for hidden layer l; convert to dL/dz through the activation.
            const double* av = a.data() + s * in;
            for (std::size_t i = 0; i < in; ++i)
                p[i] *= m.arch.activation == Activation::Tanh ? 1.0 - av[i] * av[i] : (av[i] > 0.0 ? 1.0 : 0.0);
        }
        delta.swap(prev);
    }
}

// ---------------------------------------------------------------------------
// Optimiser

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t t = 0;
};

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline double l2_norm(std::span<const double> g) {
    double s = 0.0;
    for (double x : g) s += x * x;
    return std::sqrt(s);
}

/// Scales g in place so that its norm is at most max_norm (<= 0 disables). Returns the pre-clip norm.
inline double clip_grad_norm(std::span<double> g, double max_norm) {
    const double n = l2_norm(g);
    if (max_norm > 0.0 && n > max_norm) {
        const double s = max_norm / (n + 1e-12);
        for (double& x : g) x *= s;
    }
    return n;
}

inline void adam_step(std::span<double> params, std::span<const double> grad, AdamState& st, const AdamConfig& cfg) {
    if (grad.size() != params.size()) throw ContractError("adam: gradient size mismatch");
    if (st.m.size() != params.size()) {
        st.m.assign(params.size(), 0.0);
        st.v.assign(params.size(), 0.0);
        st.t = 0;
    }
    ++st.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grad[i];
        st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        params[i] -= cfg.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference check

/// Max relative error between `analytic` and central differences of `loss` over `probes`
/// randomly chosen coordinates (all coordinates when probes is 0 or exceeds the size).
template <typename LossFn>
double grad_check(std::vector<double> params, LossFn&& loss, std::span<const double> analytic, double h,
                  std::size_t probes = 0, std::uint64_t seed = 0) {
    if (!(h > 0.0) || !std::isfinite(h)) throw InputError("grad_check: perturbation must be finite and > 0");
    if (analytic.size() != params.size()) throw ContractError("grad_check: gradient size mismatch");
    std::vector<std::size_t> idx(params.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (probes > 0 && probes < idx.size()) {
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(probes);
    }
    double worst = 0.0;
    for (std::size_t i : idx) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = loss(std::as_const(params));
        params[i] = keep - h;
        const double dn = loss(std::as_const(params));
        params[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
    }
    return worst;
}

} // namespace chiller::nn
