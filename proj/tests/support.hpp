#pragma once

// Shared fixtures and independent oracles for the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ddgen/image_set.hpp"
#include "ddgen/model.hpp"

namespace testing {

inline ddgen::ModelConfig small_config(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                       std::vector<std::size_t> hidden = {8, 6},
                                       ddgen::Activation act = ddgen::Activation::tanh, std::size_t steps = 1,
                                       bool step_conditioned = true) {
    ddgen::ModelConfig c;
    c.rows = rows;
    c.cols = cols;
    c.hidden_dims = std::move(hidden);
    c.activation = act;
    c.path_steps = steps;
    c.step_conditioned = step_conditioned;
    c.seed = seed;
    return c;
}

inline ddgen::ImageSet random_images(std::size_t n, std::size_t rows, std::size_t cols, std::uint64_t seed,
                                     double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    ddgen::ImageSet set(n, rows, cols);
    for (double& p : set.pixels()) {
        p = u(rng);
    }
    return set;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) {
        x = u(rng);
    }
    return v;
}

/// Straight-line forward pass over the model's flat parameter vector, written
/// independently of the batched kernels.
inline double oracle_forward(const ddgen::DualFunctionModel& model, std::span<const double> image,
                             std::optional<std::size_t> step) {
    const auto& cfg = model.config();
    std::vector<double> a;
    for (double v : image) {
        a.push_back(cfg.center_inputs ? 2.0 * v - 1.0 : v);
    }
    if (cfg.step_conditioned) {
        a.push_back(cfg.path_steps > 1 ? static_cast<double>(*step) / static_cast<double>(cfg.path_steps - 1) : 0.0);
    }
    const auto w = model.weights();
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& L = layers[l];
        std::vector<double> z(L.out);
        for (std::size_t o = 0; o < L.out; ++o) {
            double s = w[L.bias_offset + o];
            for (std::size_t i = 0; i < L.in; ++i) {
                s += w[L.weight_offset + o * L.in + i] * a[i];
            }
            if (l + 1 < layers.size()) {
                s = cfg.activation == ddgen::Activation::tanh ? std::tanh(s)
                                                              : (s > 0 ? s + std::log1p(std::exp(-s))
                                                                       : std::log1p(std::exp(s)));
            }
            z[o] = s;
        }
        a = std::move(z);
    }
    return a[0];
}

/// Central differences of a scalar function, one coordinate at a time.
inline std::vector<double> central_difference(const std::function<double(std::span<const double>)>& f,
                                              std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// max_i |a_i - b_i| / max_i |b_i| (absolute when b is all zero).
inline double max_rel_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return scale > 0.0 ? diff / scale : diff;
}

/// f(x) = <w, x> up to O(s^2): one tanh unit driven far inside its linear range.
inline ddgen::DualFunctionModel linear_model(std::size_t rows, std::size_t cols, std::span<const double> w,
                                             double s = 1e-7) {
    ddgen::ModelConfig c = small_config(rows, cols, 0, {1}, ddgen::Activation::tanh, 1, false);
    c.center_inputs = false;
    auto model = ddgen::DualFunctionModel::zeros(c);
    auto p = model.weights();
    const auto& L0 = model.layers()[0];
    const auto& L1 = model.layers()[1];
    for (std::size_t i = 0; i < w.size(); ++i) {
        p[L0.weight_offset + i] = s * w[i];
    }
    p[L1.weight_offset] = 1.0 / s;
    std::copy(p.begin(), p.end(), model.ema().begin());
    return model;
}

}  // namespace testing
