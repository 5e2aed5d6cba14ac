#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ddgen/image_set.hpp"
#include "ddgen/model.hpp"

namespace ddgen {

// Stable log-domain reductions. All shift by the maximum before exponentiating.
double logsumexp(std::span<const double> v);
double logmeanexp(std::span<const double> v);
std::vector<double> softmax(std::span<const double> v);

/// Donsker-Varadhan estimate in nats: mean(f_num) - logmeanexp(f_den).
double dv_estimate(std::span<const double> f_num, std::span<const double> f_den);

struct DvGradient {
    double value = 0.0;
    std::vector<double> d_num;  ///< 1/m each
    std::vector<double> d_den;  ///< -softmax(f_den)
};

/// dv_estimate together with its partial derivatives w.r.t. every input.
DvGradient dv_estimate_with_gradient(std::span<const double> f_num, std::span<const double> f_den);

enum class Direction {
    /// Sum over steps of D(Z^{j+1} || Z^j): telescopes to D(Z || X).
    toward_marginal,
    /// Sum over steps of D(Z^j || Z^{j+1}): telescopes to D(X || Z), the multi-information.
    toward_data,
};

struct DivergenceEstimate {
    double value = 0.0;
    std::size_t numerator_count = 0;
    std::size_t denominator_count = 0;
    std::vector<double> per_step;
};

struct NormalizedDualOffsets {
    std::vector<double> eta;
    friend bool operator==(const NormalizedDualOffsets&, const NormalizedDualOffsets&) = default;
};

/// eta[j] = logmeanexp of the step-j dual values supplied for step j.
NormalizedDualOffsets normalize_dual(const std::vector<std::vector<double>>& f_values_per_step);

/// Offsets of a trained model over a path [Z^0 .. Z^k]. Step j is normalized
/// over its denominator set Z^{j+1}, so every f(., j) - eta[j] has
/// logmeanexp zero there and the summed coordinate approximates log(p/q).
NormalizedDualOffsets compute_offsets(const DualFunctionModel& model, std::span<const ImageSet> path);

/// Dual-space coordinate sum_j (f(x, j) - eta[j]).
double path_dual_value(const DualFunctionModel& model, std::span<const double> image,
                       const NormalizedDualOffsets& offsets);
std::vector<double> path_dual_values(const DualFunctionModel& model, const ImageSet& images,
                                     const NormalizedDualOffsets& offsets);
/// Gradient of path_dual_value w.r.t. the pixels.
std::vector<double> path_dual_gradient(const DualFunctionModel& model, std::span<const double> image,
                                       const NormalizedDualOffsets& offsets);

struct DualValueAndGradient {
    double value = 0.0;
    std::vector<double> gradient;
};

/// path_dual_value and path_dual_gradient from one batched pass.
DualValueAndGradient path_dual_value_and_gradient(const DualFunctionModel& model, std::span<const double> image,
                                                  const NormalizedDualOffsets& offsets);

/// Raw per-step sums sum_j f(x, j) for every image, without offsets.
std::vector<double> summed_step_outputs(const DualFunctionModel& model, const ImageSet& images);

/// Path-summed DV estimate over [Z^0 = X, ..., Z^k = Z].
///
/// toward_marginal: per_step[j] = dv(f(Z^{j+1}, j), f(Z^j, j)).
/// toward_data:     per_step[j] = dv(f(Z^j, j), f(Z^{j+1}, j)).
/// Training maximizes toward_data, so that direction is the multi-information
/// estimate; toward_marginal evaluates the same witness with roles swapped.
DivergenceEstimate path_divergence(const DualFunctionModel& model, std::span<const ImageSet> path,
                                   Direction direction);

}  // namespace ddgen
