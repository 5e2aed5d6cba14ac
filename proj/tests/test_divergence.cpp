#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ddgen/diffusion_path.hpp"
#include "ddgen/divergence.hpp"
#include "ddgen/error.hpp"
#include "support.hpp"

using namespace ddgen;

namespace {

// Naive extended-precision evaluation, valid for moderate inputs.
double oracle_dv(const std::vector<double>& num, const std::vector<double>& den) {
    long double mean = 0.0L;
    for (double v : num) {
        mean += v;
    }
    mean /= static_cast<long double>(num.size());
    long double s = 0.0L;
    for (double v : den) {
        s += std::exp(static_cast<long double>(v));
    }
    return static_cast<double>(mean - std::log(s / static_cast<long double>(den.size())));
}

std::vector<ImageSet> random_path(std::size_t n, std::size_t rows, std::size_t cols, std::size_t k, std::uint64_t seed) {
    const ImageSet x = testing::random_images(n, rows, cols, seed);
    const ImageSet z = sample_marginals(x, seed + 1);
    return build_path(x, z, default_schedule(cols, k));
}

}  // namespace

TEST_CASE("dv_estimate hand cases") {
    CHECK(dv_estimate(std::vector<double>{0, 0}, std::vector<double>{0, 0}) == 0.0);
    CHECK(std::abs(dv_estimate(std::vector<double>{1, 1}, std::vector<double>{0, 0}) - 1.0) <= 1e-12);
    const double expected = 0.5 - std::log((1.0 + std::exp(1.0)) / 2.0);
    CHECK(std::abs(dv_estimate(std::vector<double>{1, 0}, std::vector<double>{0, 1}) - expected) <= 1e-12);
    CHECK(expected == doctest::Approx(-0.12011).epsilon(1e-4));
}

TEST_CASE("dv_estimate rejects empty or non-finite input") {
    const std::vector<double> one{1.0}, none;
    CHECK_THROWS_AS((void)dv_estimate(none, one), ArgumentError);
    CHECK_THROWS_AS((void)dv_estimate(one, none), ArgumentError);
    CHECK_THROWS_AS((void)dv_estimate(std::vector<double>{NAN}, one), ArgumentError);
    CHECK_THROWS_AS((void)logsumexp(none), ArgumentError);
}

TEST_CASE("dv_estimate matches an extended-precision oracle") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto num = testing::random_vector(3 + seed, seed, -5, 5);
        const auto den = testing::random_vector(7 + seed, seed + 1000, -5, 5);
        CHECK(dv_estimate(num, den) == doctest::Approx(oracle_dv(num, den)).epsilon(1e-13));
    }
}

TEST_CASE("dv_estimate(v, v) <= 0 with equality exactly for constant v") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto v = testing::random_vector(2 + seed % 17, seed, -3, 3);
        CHECK(dv_estimate(v, v) < 0.0);
    }
    for (double c : {-4.0, 0.0, 2.5, 700.0}) {
        const std::vector<double> v(9, c);
        CHECK(std::abs(dv_estimate(v, v)) <= 1e-12 * std::max(1.0, std::abs(c)));
    }
}

TEST_CASE("dv_estimate is invariant to a common shift") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto num = testing::random_vector(11, seed, -2, 2);
        auto den = testing::random_vector(13, seed + 77, -2, 2);
        const double base = dv_estimate(num, den);
        const double c = (static_cast<double>(seed) - 25.0) * 3.7;
        for (double& v : num) {
            v += c;
        }
        for (double& v : den) {
            v += c;
        }
        CHECK(dv_estimate(num, den) == doctest::Approx(base).epsilon(1e-10));
    }
}

TEST_CASE("logsumexp does not overflow at +-1e4") {
    CHECK(logsumexp(std::vector<double>{1e4, 1e4}) == doctest::Approx(1e4 + std::log(2.0)).epsilon(1e-15));
    CHECK(logsumexp(std::vector<double>{-1e4, -1e4}) == doctest::Approx(-1e4 + std::log(2.0)).epsilon(1e-15));
    CHECK(logsumexp(std::vector<double>{1e4, -1e4}) == 1e4);
    CHECK(logmeanexp(std::vector<double>{1e4, 1e4, 1e4}) == 1e4);
    CHECK(std::isfinite(dv_estimate(std::vector<double>{1e4}, std::vector<double>{-1e4, 1e4})));
}

TEST_CASE("softmax sums to one and dv gradient has the documented form") {
    const auto v = testing::random_vector(20, 3, -4, 4);
    const auto p = softmax(v);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    const auto num = testing::random_vector(5, 4);
    const auto g = dv_estimate_with_gradient(num, v);
    CHECK(g.value == dv_estimate(num, v));
    for (double d : g.d_num) {
        CHECK(d == doctest::Approx(0.2).epsilon(1e-15));
    }
    const auto fd = testing::central_difference([&](std::span<const double> den) { return dv_estimate(num, den); }, v);
    CHECK(testing::max_rel_error(g.d_den, fd) <= 1e-7);
}

TEST_CASE("normalize_dual examples") {
    CHECK(normalize_dual({{0.0, 0.0}}).eta == std::vector<double>{0.0});
    for (double c : {-3.0, 0.25, 40.0}) {
        CHECK(normalize_dual({{c, c}}).eta[0] == doctest::Approx(c).epsilon(1e-15));
    }
    const auto off = normalize_dual({{0.0, std::log(3.0)}, {1.0}});
    CHECK(std::abs(off.eta[0] - std::log(2.0)) <= 1e-12);
    CHECK(off.eta[1] == 1.0);
    CHECK_THROWS_AS((void)normalize_dual({{1.0}, {}}), ArgumentError);
}

TEST_CASE("path_dual_value examples") {
    const auto x = testing::random_vector(6, 1, 0, 1);
    auto zero = DualFunctionModel::zeros(testing::small_config(2, 3, 0, {4}, Activation::tanh, 3));
    CHECK(path_dual_value(zero, x, {{0.0, 0.0, 0.0}}) == 0.0);
    CHECK_THROWS_AS((void)path_dual_value(zero, x, {{0.0}}), ArgumentError);

    DualFunctionModel one(testing::small_config(2, 3, 5, {4}, Activation::tanh, 1));
    CHECK(path_dual_value(one, x, {{0.3}}) == one.forward(x, 0) - 0.3);

    // One hidden unit reads only the step feature: f(x, 0) = 1, f(x, 1) = 2.
    auto two = DualFunctionModel::zeros(testing::small_config(2, 3, 0, {1}, Activation::tanh, 2));
    auto w = two.weights();
    const auto& L0 = two.layers()[0];
    const auto& L1 = two.layers()[1];
    w[L0.weight_offset + 6] = 0.5;
    w[L1.weight_offset] = 1.0 / std::tanh(0.5);
    w[L1.bias_offset] = 1.0;
    CHECK(two.forward(x, 0) == 1.0);
    CHECK(two.forward(x, 1) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(path_dual_value(two, x, {{0.5, 0.5}}) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("path_dual_value agrees with per-step forwards and its gradient with finite differences") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        DualFunctionModel model(testing::small_config(3, 4, seed, {7, 5}, Activation::tanh, 4));
        const NormalizedDualOffsets off{testing::random_vector(4, seed + 50)};
        const auto x = testing::random_vector(12, seed + 100, 0.1, 0.9);
        double expected = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            expected += model.forward(x, j) - off.eta[j];
        }
        CHECK(path_dual_value(model, x, off) == doctest::Approx(expected).epsilon(1e-13));
        const auto both = path_dual_value_and_gradient(model, x, off);
        CHECK(both.value == doctest::Approx(expected).epsilon(1e-13));
        const auto fd = testing::central_difference(
            [&](std::span<const double> v) { return path_dual_value(model, v, off); }, x);
        CHECK(testing::max_rel_error(path_dual_gradient(model, x, off), fd) <= 1e-6);
        CHECK(testing::max_rel_error(both.gradient, fd) <= 1e-6);
    }
}

TEST_CASE("path_divergence with one step is bit-identical to dv_estimate") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        DualFunctionModel model(testing::small_config(3, 4, seed, {6}, Activation::tanh, 1));
        const auto path = random_path(40, 3, 4, 1, seed);
        REQUIRE(path.size() == 2);
        const auto fx = model.forward(path[0], 0);
        const auto fz = model.forward(path[1], 0);
        const auto marginal = path_divergence(model, path, Direction::toward_marginal);
        const auto data = path_divergence(model, path, Direction::toward_data);
        CHECK(marginal.value == dv_estimate(fz, fx));
        CHECK(data.value == dv_estimate(fx, fz));
        CHECK(marginal.numerator_count == 40);
        CHECK(marginal.denominator_count == 40);
    }
    auto zero = DualFunctionModel::zeros(testing::small_config(3, 4, 0, {6}, Activation::tanh, 1));
    CHECK(path_divergence(zero, random_path(10, 3, 4, 1, 9), Direction::toward_marginal).value == 0.0);
}

TEST_CASE("path_divergence over three steps equals three separate estimates") {
    DualFunctionModel model(testing::small_config(2, 6, 11, {8, 4}, Activation::softplus, 3));
    const auto path = random_path(50, 2, 6, 3, 12);
    REQUIRE(path.size() == 4);
    for (Direction dir : {Direction::toward_marginal, Direction::toward_data}) {
        const auto est = path_divergence(model, path, dir);
        REQUIRE(est.per_step.size() == 3);
        double sum = 0.0;
        double per_step_sum = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            const auto a = model.forward(path[j], j);
            const auto b = model.forward(path[j + 1], j);
            const double step = dir == Direction::toward_marginal ? dv_estimate(b, a) : dv_estimate(a, b);
            CHECK(std::abs(est.per_step[j] - step) <= 1e-12);
            sum += step;
            per_step_sum += est.per_step[j];
        }
        CHECK(std::abs(est.value - sum) <= 1e-12);
        CHECK(std::abs(est.value - per_step_sum) <= 1e-9);
    }
}

TEST_CASE("path_divergence validates its inputs") {
    DualFunctionModel model(testing::small_config(2, 4, 0, {3}, Activation::tanh, 2));
    const auto path = random_path(10, 2, 4, 2, 0);
    CHECK_THROWS_AS((void)path_divergence(model, std::span(path).first(1), Direction::toward_data), ArgumentError);
    CHECK_THROWS_AS((void)path_divergence(model, std::span(path).first(2), Direction::toward_data), ArgumentError);
}

TEST_CASE("compute_offsets normalizes each step over its denominator set") {
    DualFunctionModel model(testing::small_config(2, 4, 3, {5}, Activation::tanh, 2));
    const auto path = random_path(30, 2, 4, 2, 4);
    const auto off = compute_offsets(model, path);
    REQUIRE(off.eta.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) {
        auto f = model.forward(path[j + 1], j);
        CHECK(std::abs(off.eta[j] - logmeanexp(f)) <= 1e-12);
        for (double& v : f) {
            v -= off.eta[j];
        }
        CHECK(std::abs(logmeanexp(f)) <= 1e-12);
    }
    const auto summed = summed_step_outputs(model, path[0]);
    const auto values = path_dual_values(model, path[0], off);
    for (std::size_t i = 0; i < values.size(); ++i) {
        CHECK(values[i] == doctest::Approx(summed[i] - off.eta[0] - off.eta[1]).epsilon(1e-13));
    }
}
