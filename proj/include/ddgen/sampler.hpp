#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ddgen/clustering.hpp"
#include "ddgen/divergence.hpp"
#include "ddgen/image_set.hpp"
#include "ddgen/model.hpp"

namespace ddgen {

struct WalkConfig {
    std::size_t targets_per_gap = 8;
    double step_size = 0.05;
    std::size_t max_steps = 200;
    /// Absolute tolerance in dual units; when <= 0 it is tol_fraction * (dual range of X).
    double tol = 0.0;
    double tol_fraction = 0.02;
    /// Per-pixel Gaussian noise std; negative selects 0.01 * step_size.
    double noise_scale = -1.0;
    /// Step along grad / |grad| instead of the raw gradient.
    bool normalize_direction = true;
    std::uint64_t seed = 0;

    [[nodiscard]] double effective_noise() const noexcept { return noise_scale < 0.0 ? 0.01 * step_size : noise_scale; }
    void validate() const;
};

struct WalkResult {
    std::vector<double> image;
    double dual_value = 0.0;
    std::size_t steps = 0;
};

/// Moves x toward the dual-space target:
///   x <- clamp(x + a * sign(target - f(x)) * d(x) + noise, 0, 1)
/// with d = grad f / |grad f| (or the raw gradient when normalize_direction
/// is off). The step a starts at cfg.step_size, halves whenever the sign of
/// the residual flips and otherwise grows by 1.25x up to 64 * step_size.
/// Returns nullopt when max_steps runs out; throws WalkError on a
/// non-finite gradient.
std::optional<WalkResult> gradient_walk(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                                        std::span<const double> x_start, double target, double tol,
                                        const WalkConfig& cfg, std::uint64_t stream);

struct WalkTask {
    std::size_t start_index;  ///< original index into X
    double target;
    std::size_t gap;          ///< which selected cut the target belongs to
};

struct SampleBatch {
    ImageSet images;
    std::vector<double> dual_values;
    std::vector<double> targets;
    std::size_t attempts = 0;
    std::size_t failures = 0;       ///< walks that exhausted max_steps
    std::size_t ood_rejections = 0; ///< converged but outside [min, max] of X's dual values
    double tol = 0.0;
    double data_min = 0.0;
    double data_max = 0.0;
};

/// Dual-space context of a real set: its profile, cuts and dual range.
struct GapPlan {
    std::vector<double> data_duals;
    DualProfile profile;
    CutPointSet cuts;
    double tol = 0.0;
};

GapPlan plan_gaps(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                  std::size_t knn_k, std::size_t c, const WalkConfig& cfg);

/// Targets for one pass over the gaps. Round 0 spaces them evenly strictly
/// inside each gap; later rounds jitter positions with a seeded stream.
std::vector<WalkTask> plan_targets(const GapPlan& plan, std::size_t per_gap, std::size_t round, std::uint64_t seed);

/// Runs the walks (concurrently; results kept in task order) and applies the
/// tolerance and out-of-range filters.
SampleBatch run_walks(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                      const GapPlan& plan, std::span<const WalkTask> tasks, const WalkConfig& cfg,
                      std::uint64_t stream_base);

/// One pass of gap filling between the c cut points of largest local divergence.
SampleBatch sample_via_gradient_walk(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                                     const ImageSet& data, std::size_t knn_k, std::size_t c, const WalkConfig& cfg);

}  // namespace ddgen
