#pragma once

// Arithmetic shared by both kernel sets. Every output element of a product is
// one left-to-right chain of madd calls, so blocking, tiling and thread
// partitioning never change a result bit.

#include <cmath>
#include <cstdint>
#include <bit>

namespace ddgen::kernels::detail {

inline double madd(double a, double b, double c) {
#ifdef __FMA__
    return std::fma(a, b, c);
#else
    return a * b + c;
#endif
}

/// exp(x) for x <= 0: Cody-Waite reduction to |r| <= ln2/2 and a degree-13
/// Taylor polynomial, with 2^n assembled in the exponent bits. Branch free and
/// integer-conversion free so loops over it vectorize. Accurate to ~2 ulp.
inline double exp_nonpositive(double x) {
    constexpr double log2e = 1.4426950408889634;
    constexpr double ln2_hi = 6.93147180369123816490e-01;
    constexpr double ln2_lo = 1.90821492927058770002e-10;
    constexpr double shifter = 6755399441055744.0;  // 1.5 * 2^52
    x = x < -708.0 ? -708.0 : x;
    const double t = madd(x, log2e, shifter);
    const double n = t - shifter;
    const double r = madd(-n, ln2_lo, madd(-n, ln2_hi, x));
    double p = 1.0 / 6227020800.0;
    p = madd(p, r, 1.0 / 479001600.0);
    p = madd(p, r, 1.0 / 39916800.0);
    p = madd(p, r, 1.0 / 3628800.0);
    p = madd(p, r, 1.0 / 362880.0);
    p = madd(p, r, 1.0 / 40320.0);
    p = madd(p, r, 1.0 / 5040.0);
    p = madd(p, r, 1.0 / 720.0);
    p = madd(p, r, 1.0 / 120.0);
    p = madd(p, r, 1.0 / 24.0);
    p = madd(p, r, 1.0 / 6.0);
    p = madd(p, r, 0.5);
    p = madd(p, r, 1.0);
    p = madd(p, r, 1.0);
    const std::uint64_t bits =
        (std::bit_cast<std::uint64_t>(t) - std::bit_cast<std::uint64_t>(shifter) + 1023u) << 52;
    return p * std::bit_cast<double>(bits);
}

/// tanh from exp(-2|x|), with an odd Taylor series below |x| = 0.01 where
/// 1 - exp(-2|x|) would cancel.
inline double tanh_kernel(double x) {
    const double ax = std::fabs(x);
    const double e = exp_nonpositive(-2.0 * ax);
    const double big = (1.0 - e) / (1.0 + e);
    const double x2 = ax * ax;
    double s = 62.0 / 2835.0;
    s = madd(s, x2, -17.0 / 315.0);
    s = madd(s, x2, 2.0 / 15.0);
    s = madd(s, x2, -1.0 / 3.0);
    const double small = madd(ax * x2, s, ax);
    const double t = ax < 0.01 ? small : big;
    return std::copysign(t, x);
}

}  // namespace ddgen::kernels::detail
