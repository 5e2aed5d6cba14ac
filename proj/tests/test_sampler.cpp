#include <doctest.h>

#include <cmath>

#include "ddgen/error.hpp"
#include "ddgen/sampler.hpp"
#include "support.hpp"

using namespace ddgen;

namespace {

WalkConfig quiet_walk(double step, std::size_t max_steps) {
    WalkConfig cfg;
    cfg.step_size = step;
    cfg.max_steps = max_steps;
    cfg.noise_scale = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("a walk that starts at its target takes no steps") {
    DualFunctionModel model(testing::small_config(2, 3, 1, {5}, Activation::tanh, 2));
    const NormalizedDualOffsets off{{0.1, -0.2}};
    const auto x = testing::random_vector(6, 2, 0, 1);
    const double target = path_dual_value(model, x, off);
    WalkConfig cfg;
    cfg.noise_scale = 0.5;
    const auto r = gradient_walk(model, off, x, target, 1e-9, cfg, 0);
    REQUIRE(r.has_value());
    CHECK(r->steps == 0);
    CHECK(r->image == x);
}

TEST_CASE("a linear dual reaches a nearby target in about ten steps") {
    auto w = testing::random_vector(8, 3);
    double norm = 0.0;
    for (double v : w) {
        norm += v * v;
    }
    for (double& v : w) {
        v /= std::sqrt(norm);
    }
    const auto model = testing::linear_model(2, 4, w);
    const NormalizedDualOffsets off{{0.0}};
    const auto x = testing::random_vector(8, 4, 0.3, 0.7);
    const double f0 = path_dual_value(model, x, off);
    for (bool normalized : {true, false}) {
        auto cfg = quiet_walk(0.01, 200);
        cfg.normalize_direction = normalized;
        const auto r = gradient_walk(model, off, x, f0 + 0.1, 1e-3, cfg, 0);
        REQUIRE(r.has_value());
        CHECK(r->steps >= 5);
        CHECK(r->steps <= 15);
        CHECK(std::abs(path_dual_value(model, r->image, off) - (f0 + 0.1)) <= 1e-3);
        CHECK(r->dual_value == doctest::Approx(path_dual_value(model, r->image, off)).epsilon(1e-12));
    }
}

TEST_CASE("a zero model never reaches a non-zero target") {
    const auto model = DualFunctionModel::zeros(testing::small_config(2, 2, 0, {3}, Activation::tanh, 1));
    const auto x = testing::random_vector(4, 5, 0, 1);
    const auto r = gradient_walk(model, {{0.0}}, x, 1.0, 0.01, quiet_walk(0.05, 25), 0);
    CHECK_FALSE(r.has_value());
}

TEST_CASE("walk argument checks") {
    const auto model = DualFunctionModel::zeros(testing::small_config(1, 2, 0, {2}, Activation::tanh, 1));
    const std::vector<double> x{0.5, 0.5};
    CHECK_THROWS_AS((void)gradient_walk(model, {{0.0}}, x, NAN, 0.1, WalkConfig{}, 0), ArgumentError);
    CHECK_THROWS_AS((void)gradient_walk(model, {{0.0}}, x, 1.0, 0.0, WalkConfig{}, 0), ArgumentError);
    WalkConfig bad;
    bad.max_steps = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = WalkConfig{};
    bad.step_size = 0.0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = WalkConfig{};
    bad.targets_per_gap = 0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    CHECK(WalkConfig{}.effective_noise() == doctest::Approx(0.01 * 0.05));
}

TEST_CASE("one target per gap lands on the midpoint of the gap") {
    // f(x) = 2x on a single pixel; data duals [0, 0, 2, 2] leave one cut at rank 2.
    const auto model = testing::linear_model(1, 1, std::vector<double>{2.0});
    ImageSet data(1, 1, std::vector<double>{0.0, 0.0, 1.0, 1.0});
    auto cfg = quiet_walk(0.05, 200);
    cfg.targets_per_gap = 1;
    cfg.tol = 0.01;
    const auto batch = sample_via_gradient_walk(model, {{0.0}}, data, 2, 1, cfg);
    REQUIRE(batch.targets.size() == 1);
    CHECK(batch.targets[0] == doctest::Approx(1.0).epsilon(1e-6));
    REQUIRE(batch.images.count() == 1);
    CHECK(std::abs(batch.dual_values[0] - 1.0) <= 0.01 + 1e-9);
    CHECK(batch.attempts == 1);
    CHECK(batch.failures == 0);
}

TEST_CASE("retained samples satisfy the range, tolerance and clamp invariants") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        DualFunctionModel model(testing::small_config(2, 3, seed, {6, 4}, Activation::tanh, 2));
        const ImageSet data = testing::random_images(30, 2, 3, seed + 10);
        const auto off = normalize_dual({model.forward(data, 0), model.forward(data, 1)});
        WalkConfig cfg;
        cfg.targets_per_gap = 4;
        cfg.seed = seed;
        const auto batch = sample_via_gradient_walk(model, off, data, 3, 3, cfg);
        CHECK(batch.attempts == 12);
        CHECK(batch.images.count() + batch.failures + batch.ood_rejections == batch.attempts);
        for (double p : batch.images.pixels()) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
        for (std::size_t i = 0; i < batch.images.count(); ++i) {
            const double f = path_dual_value(model, batch.images.image(i), off);
            CHECK(f == doctest::Approx(batch.dual_values[i]).epsilon(1e-12));
            CHECK(std::abs(f - batch.targets[i]) <= batch.tol);
            CHECK(f >= batch.data_min);
            CHECK(f <= batch.data_max);
        }
    }
}

TEST_CASE("targets lie strictly inside the selected gaps") {
    DualFunctionModel model(testing::small_config(2, 2, 4, {5}, Activation::tanh, 1));
    const ImageSet data = testing::random_images(25, 2, 2, 8);
    const NormalizedDualOffsets off{{0.0}};
    WalkConfig cfg;
    const auto plan = plan_gaps(model, off, data, 3, 2, cfg);
    for (std::size_t round : {0u, 1u, 5u}) {
        const auto tasks = plan_targets(plan, 5, round, 3);
        CHECK(tasks.size() == 10);
        for (const auto& t : tasks) {
            const std::size_t j = plan.cuts.indices[t.gap];
            CHECK(t.target > plan.profile.sorted_values[j - 1]);
            CHECK(t.target < plan.profile.sorted_values[j]);
            const bool endpoint = t.start_index == plan.profile.sort_permutation[j - 1] ||
                                  t.start_index == plan.profile.sort_permutation[j];
            CHECK(endpoint);
        }
    }
    const double range = plan.profile.sorted_values.back() - plan.profile.sorted_values.front();
    CHECK(plan.tol == doctest::Approx(0.02 * range));
}

TEST_CASE("sampling is deterministic for a fixed seed") {
    DualFunctionModel model(testing::small_config(3, 3, 7, {6}, Activation::softplus, 1));
    const ImageSet data = testing::random_images(24, 3, 3, 9);
    const auto off = normalize_dual({model.forward(data, 0)});
    for (double noise : {0.0, -1.0}) {
        WalkConfig cfg;
        cfg.noise_scale = noise;
        cfg.seed = 5;
        const auto a = sample_via_gradient_walk(model, off, data, 3, 2, cfg);
        const auto b = sample_via_gradient_walk(model, off, data, 3, 2, cfg);
        CHECK(a.images.pixels() == b.images.pixels());
        CHECK(a.dual_values == b.dual_values);
        CHECK(a.failures == b.failures);
    }
}
