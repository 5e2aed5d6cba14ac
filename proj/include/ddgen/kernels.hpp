#pragma once

// Dense-layer kernels used by the dual-function network.
//
// Two implementations share one contract: `serial` is the plain loop
// reference, `omp` uses register-blocked products that run multi-threaded.
// Both evaluate each output element as the same ordered chain of fused
// multiply-adds, so their results match bit for bit, whatever the thread
// count and wherever a row sits in the batch.
//
// Layout: activations are batch x width, row-major. Weights are out x in,
// row-major.

#include <cstddef>
#include <cmath>
#include <span>

namespace ddgen {

enum class Activation { tanh, softplus };

namespace kernels {

struct DenseShape {
    std::size_t batch;
    std::size_t in;
    std::size_t out;
};

namespace serial {

/// y = x W^T + b
void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y);
/// dW += dy^T x ; db += column sums of dy
void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                           std::span<double> db);
/// dx = dy W
void dense_backward_input(DenseShape s, std::span<const double> w, std::span<const double> dy, std::span<double> dx);
void activate(Activation act, std::span<double> z);
/// grad *= act'(.) evaluated from the activation outputs `a`.
void activation_backward(Activation act, std::span<const double> a, std::span<double> grad);

}  // namespace serial

namespace omp {

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y);
void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                           std::span<double> db);
void dense_backward_input(DenseShape s, std::span<const double> w, std::span<const double> dy, std::span<double> dx);
void activate(Activation act, std::span<double> z);
void activation_backward(Activation act, std::span<const double> a, std::span<double> grad);

}  // namespace omp

inline double softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

/// softplus'(z) = sigmoid(z) = 1 - exp(-softplus(z))
inline double softplus_grad_from_output(double a) { return -std::expm1(-a); }

}  // namespace kernels
}  // namespace ddgen
