#include "ddgen/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <random>
#include <string>

#include "ddgen/error.hpp"
#include "ddgen/seed.hpp"

namespace ddgen {
namespace {

constexpr double kMaxGrowth = 64.0;

}  // namespace

void WalkConfig::validate() const {
    if (targets_per_gap < 1) {
        throw ArgumentError("targets_per_gap must be at least 1");
    }
    if (!(step_size > 0.0)) {
        throw ArgumentError("walk step_size must be positive");
    }
    if (max_steps < 1) {
        throw ArgumentError("walk max_steps must be at least 1");
    }
    if (tol <= 0.0 && !(tol_fraction > 0.0)) {
        throw ArgumentError("walk tolerance must be positive (set tol or tol_fraction)");
    }
}

std::optional<WalkResult> gradient_walk(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                                        std::span<const double> x_start, double target, double tol,
                                        const WalkConfig& cfg, std::uint64_t stream) {
    if (!std::isfinite(target)) {
        throw ArgumentError("walk target must be finite");
    }
    if (!(tol > 0.0)) {
        throw ArgumentError("walk tolerance must be positive");
    }
    std::vector<double> x(x_start.begin(), x_start.end());
    std::mt19937_64 rng(mix_seed(cfg.seed) ^ mix_seed(stream + 1));
    const double noise = cfg.effective_noise();
    std::normal_distribution<double> gauss(0.0, noise > 0.0 ? noise : 1.0);

    double rate = cfg.step_size;
    int previous_sign = 0;
    for (std::size_t step = 0;; ++step) {
        const DualValueAndGradient vg = path_dual_value_and_gradient(model, x, offsets);
        const double residual = target - vg.value;
        if (std::abs(residual) <= tol) {
            return WalkResult{std::move(x), vg.value, step};
        }
        if (step == cfg.max_steps) {
            return std::nullopt;
        }
        double norm2 = 0.0;
        for (double g : vg.gradient) {
            if (!std::isfinite(g)) {
                throw WalkError("non-finite input gradient at walk step " + std::to_string(step));
            }
            norm2 += g * g;
        }
        const double scale = cfg.normalize_direction ? (norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0) : 1.0;
        const int sign = residual > 0.0 ? 1 : -1;
        if (previous_sign != 0) {
            rate = sign != previous_sign ? 0.5 * rate : std::min(1.25 * rate, kMaxGrowth * cfg.step_size);
        }
        previous_sign = sign;
        for (std::size_t p = 0; p < x.size(); ++p) {
            double next = x[p] + rate * sign * scale * vg.gradient[p];
            if (noise > 0.0) {
                next += gauss(rng);
            }
            x[p] = std::clamp(next, 0.0, 1.0);
        }
    }
}

GapPlan plan_gaps(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                  std::size_t knn_k, std::size_t c, const WalkConfig& cfg) {
    cfg.validate();
    GapPlan plan;
    plan.data_duals = path_dual_values(model, data, offsets);
    plan.profile = build_profile(plan.data_duals, knn_k);
    plan.cuts = select_cut_points(plan.profile, c);
    const double range = plan.profile.sorted_values.back() - plan.profile.sorted_values.front();
    plan.tol = cfg.tol > 0.0 ? cfg.tol : std::max(cfg.tol_fraction * range, 1e-12);
    return plan;
}

std::vector<WalkTask> plan_targets(const GapPlan& plan, std::size_t per_gap, std::size_t round, std::uint64_t seed) {
    std::vector<WalkTask> tasks;
    tasks.reserve(plan.cuts.count() * per_gap);
    std::mt19937_64 rng(mix_seed(seed) ^ mix_seed(0xC0FFEEull + round));
    std::uniform_real_distribution<double> jitter(0.0, 1.0);
    for (std::size_t g = 0; g < plan.cuts.count(); ++g) {
        const std::size_t j = plan.cuts.indices[g];
        const std::size_t left = plan.profile.sort_permutation[j - 1];
        const std::size_t right = plan.profile.sort_permutation[j];
        const double lo = plan.profile.sorted_values[j - 1];
        const double hi = plan.profile.sorted_values[j];
        for (std::size_t m = 0; m < per_gap; ++m) {
            double pos = 0.0;
            if (round == 0) {
                pos = static_cast<double>(m + 1) / static_cast<double>(per_gap + 1);
            } else {
                double u = jitter(rng);
                while (u <= 0.0) {
                    u = jitter(rng);
                }
                pos = (static_cast<double>(m) + u) / static_cast<double>(per_gap);
            }
            const double target = lo + pos * (hi - lo);
            const double to_left = target - lo;
            const double to_right = hi - target;
            std::size_t start = left;
            if (to_right < to_left || (to_right == to_left && m % 2 == 1)) {
                start = right;
            }
            tasks.push_back({start, target, g});
        }
    }
    return tasks;
}

SampleBatch run_walks(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                      const GapPlan& plan, std::span<const WalkTask> tasks, const WalkConfig& cfg,
                      std::uint64_t stream_base) {
    std::vector<std::optional<WalkResult>> results(tasks.size());
    std::exception_ptr failure;
    const auto count = static_cast<std::int64_t>(tasks.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t t = 0; t < count; ++t) {
        try {
            results[t] = gradient_walk(model, offsets, data.image(tasks[t].start_index), tasks[t].target, plan.tol,
                                       cfg, stream_base + static_cast<std::uint64_t>(t));
        } catch (...) {
#pragma omp critical(ddgen_walk_failure)
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    SampleBatch batch;
    batch.images = ImageSet(0, data.rows(), data.cols(), SetTag::generated);
    batch.attempts = tasks.size();
    batch.tol = plan.tol;
    batch.data_min = plan.profile.sorted_values.front();
    batch.data_max = plan.profile.sorted_values.back();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (!results[t]) {
            ++batch.failures;
            continue;
        }
        const double v = results[t]->dual_value;
        if (v < batch.data_min || v > batch.data_max) {
            ++batch.ood_rejections;
            continue;
        }
        batch.images.append(results[t]->image);
        batch.dual_values.push_back(v);
        batch.targets.push_back(tasks[t].target);
    }
    return batch;
}

SampleBatch sample_via_gradient_walk(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                                     const ImageSet& data, std::size_t knn_k, std::size_t c, const WalkConfig& cfg) {
    const GapPlan plan = plan_gaps(model, offsets, data, knn_k, c, cfg);
    const std::vector<WalkTask> tasks = plan_targets(plan, cfg.targets_per_gap, 0, cfg.seed);
    return run_walks(model, offsets, data, plan, tasks, cfg, 0);
}

}  // namespace ddgen
