#include <cmath>

#include "ddgen/kernels.hpp"
#include "kernels_detail.hpp"

namespace ddgen::kernels::serial {

using detail::madd;

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y) {
    for (std::size_t r = 0; r < s.batch; ++r) {
        const double* xr = x.data() + r * s.in;
        for (std::size_t o = 0; o < s.out; ++o) {
            const double* wo = w.data() + o * s.in;
            double acc = b[o];
            for (std::size_t i = 0; i < s.in; ++i) {
                acc = madd(xr[i], wo[i], acc);
            }
            y[r * s.out + o] = acc;
        }
    }
}

void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                           std::span<double> db) {
    for (std::size_t o = 0; o < s.out; ++o) {
        for (std::size_t i = 0; i < s.in; ++i) {
            double acc = dw[o * s.in + i];
            for (std::size_t r = 0; r < s.batch; ++r) {
                acc = madd(dy[r * s.out + o], x[r * s.in + i], acc);
            }
            dw[o * s.in + i] = acc;
        }
        for (std::size_t r = 0; r < s.batch; ++r) {
            db[o] += dy[r * s.out + o];
        }
    }
}

void dense_backward_input(DenseShape s, std::span<const double> w, std::span<const double> dy, std::span<double> dx) {
    for (std::size_t r = 0; r < s.batch; ++r) {
        for (std::size_t i = 0; i < s.in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < s.out; ++o) {
                acc = madd(dy[r * s.out + o], w[o * s.in + i], acc);
            }
            dx[r * s.in + i] = acc;
        }
    }
}

void activate(Activation act, std::span<double> z) {
    if (act == Activation::tanh) {
        for (double& v : z) {
            v = detail::tanh_kernel(v);
        }
    } else {
        for (double& v : z) {
            v = softplus(v);
        }
    }
}

void activation_backward(Activation act, std::span<const double> a, std::span<double> grad) {
    if (act == Activation::tanh) {
        for (std::size_t k = 0; k < grad.size(); ++k) {
            grad[k] *= 1.0 - a[k] * a[k];
        }
    } else {
        for (std::size_t k = 0; k < grad.size(); ++k) {
            grad[k] *= softplus_grad_from_output(a[k]);
        }
    }
}

}  // namespace ddgen::kernels::serial
