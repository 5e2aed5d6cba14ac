#include <algorithm>
#include <cstdint>
#include <vector>

#include "ddgen/kernels.hpp"
#include "kernels_detail.hpp"

// Register-blocked products. C (m x n) accumulates A (m x p) B (p x n) in
// MR x NR tiles; the p axis is cut into KC-long panels so a B panel stays in
// L1 across row tiles. Tiles are shared out over OpenMP threads, but each
// element is still the single ordered chain the serial loops compute, so the
// two kernel sets agree bit for bit at any thread count.
namespace ddgen::kernels::omp {
namespace {

using detail::madd;

constexpr std::size_t MR = 4;
constexpr std::size_t NR = 16;
constexpr std::size_t KC = 128;
constexpr std::size_t kParallelWork = 1 << 15;

/// A(r, k) = a[r * ars + k * acs]
struct StridedA {
    const double* a;
    std::size_t ars;
    std::size_t acs;
};

void full_tile(std::size_t kc, StridedA A, const double* b, std::size_t ldb, double* c, std::size_t ldc) {
    double acc[MR][NR];
    for (std::size_t r = 0; r < MR; ++r) {
#pragma omp simd
        for (std::size_t j = 0; j < NR; ++j) {
            acc[r][j] = c[r * ldc + j];
        }
    }
    for (std::size_t k = 0; k < kc; ++k) {
        const double* bk = b + k * ldb;
#pragma GCC unroll 4
        for (std::size_t r = 0; r < MR; ++r) {
            const double av = A.a[r * A.ars + k * A.acs];
#pragma omp simd
            for (std::size_t j = 0; j < NR; ++j) {
                acc[r][j] = madd(av, bk[j], acc[r][j]);
            }
        }
    }
    for (std::size_t r = 0; r < MR; ++r) {
#pragma omp simd
        for (std::size_t j = 0; j < NR; ++j) {
            c[r * ldc + j] = acc[r][j];
        }
    }
}

void edge_tile(std::size_t mr, std::size_t nr, std::size_t kc, StridedA A, const double* b, std::size_t ldb, double* c,
               std::size_t ldc) {
    for (std::size_t r = 0; r < mr; ++r) {
        for (std::size_t j = 0; j < nr; ++j) {
            double acc = c[r * ldc + j];
            for (std::size_t k = 0; k < kc; ++k) {
                acc = madd(A.a[r * A.ars + k * A.acs], b[k * ldb + j], acc);
            }
            c[r * ldc + j] = acc;
        }
    }
}

/// C += A B with C row-major (ldc = n) and B row-major (ldb = n).
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t p, StridedA A, const double* b, double* c) {
    const std::size_t row_tiles = (m + MR - 1) / MR;
    const std::size_t col_tiles = (n + NR - 1) / NR;
    const auto tiles = static_cast<std::int64_t>(row_tiles * col_tiles);
    const bool wide = m * n * p >= kParallelWork && tiles > 1;
    for (std::size_t k0 = 0; k0 < p; k0 += KC) {
        const std::size_t kc = std::min(KC, p - k0);
        const StridedA Ak{A.a + k0 * A.acs, A.ars, A.acs};
        const double* bk = b + k0 * n;
        // Column-tile major so consecutive tiles on a thread reuse one B panel.
#pragma omp parallel for schedule(static) if (wide)
        for (std::int64_t t = 0; t < tiles; ++t) {
            const std::size_t ct = static_cast<std::size_t>(t) / row_tiles;
            const std::size_t rt = static_cast<std::size_t>(t) % row_tiles;
            const std::size_t r0 = rt * MR;
            const std::size_t j0 = ct * NR;
            const std::size_t mr = std::min(MR, m - r0);
            const std::size_t nr = std::min(NR, n - j0);
            const StridedA At{Ak.a + r0 * Ak.ars, Ak.ars, Ak.acs};
            if (mr == MR && nr == NR) {
                full_tile(kc, At, bk + j0, n, c + r0 * n + j0, n);
            } else {
                edge_tile(mr, nr, kc, At, bk + j0, n, c + r0 * n + j0, n);
            }
        }
    }
}

/// Runs body(lo, hi) over fixed 4096-element chunks, forking only for large inputs.
template <typename Body>
void for_chunks(std::size_t n, Body body) {
    constexpr std::size_t chunk = 4096;
    const auto chunks = static_cast<std::int64_t>((n + chunk - 1) / chunk);
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::size_t lo = static_cast<std::size_t>(c) * chunk;
        body(lo, std::min(n, lo + chunk));
    }
}

}  // namespace

void dense_forward(DenseShape s, std::span<const double> x, std::span<const double> w, std::span<const double> b,
                   std::span<double> y) {
    std::vector<double> wt(s.in * s.out);
    for (std::size_t o = 0; o < s.out; ++o) {
        for (std::size_t i = 0; i < s.in; ++i) {
            wt[i * s.out + o] = w[o * s.in + i];
        }
    }
    for (std::size_t r = 0; r < s.batch; ++r) {
        std::copy(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(s.out), y.begin() + static_cast<std::ptrdiff_t>(r * s.out));
    }
    gemm_accumulate(s.batch, s.out, s.in, {x.data(), s.in, 1}, wt.data(), y.data());
}

void dense_backward_params(DenseShape s, std::span<const double> x, std::span<const double> dy, std::span<double> dw,
                           std::span<double> db) {
    gemm_accumulate(s.out, s.in, s.batch, {dy.data(), 1, s.out}, x.data(), dw.data());
    for (std::size_t r = 0; r < s.batch; ++r) {
        const double* g = dy.data() + r * s.out;
#pragma omp simd
        for (std::size_t o = 0; o < s.out; ++o) {
            db[o] += g[o];
        }
    }
}

void dense_backward_input(DenseShape s, std::span<const double> w, std::span<const double> dy, std::span<double> dx) {
    std::fill(dx.begin(), dx.begin() + static_cast<std::ptrdiff_t>(s.batch * s.in), 0.0);
    gemm_accumulate(s.batch, s.in, s.out, {dy.data(), s.out, 1}, w.data(), dx.data());
}

void activate(Activation act, std::span<double> z) {
    const bool tanh = act == Activation::tanh;
    for_chunks(z.size(), [&](std::size_t lo, std::size_t hi) {
        double* v = z.data();
        if (tanh) {
            for (std::size_t k = lo; k < hi; ++k) {
                v[k] = detail::tanh_kernel(v[k]);
            }
        } else {
            for (std::size_t k = lo; k < hi; ++k) {
                v[k] = softplus(v[k]);
            }
        }
    });
}

void activation_backward(Activation act, std::span<const double> a, std::span<double> grad) {
    const bool tanh = act == Activation::tanh;
    for_chunks(grad.size(), [&](std::size_t lo, std::size_t hi) {
        double* g = grad.data();
        const double* y = a.data();
        if (tanh) {
            for (std::size_t k = lo; k < hi; ++k) {
                g[k] *= 1.0 - y[k] * y[k];
            }
        } else {
            for (std::size_t k = lo; k < hi; ++k) {
                g[k] *= softplus_grad_from_output(y[k]);
            }
        }
    });
}

}  // namespace ddgen::kernels::omp
