#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddgen/diffusion_path.hpp"
#include "ddgen/divergence.hpp"
#include "ddgen/image_set.hpp"
#include "ddgen/model.hpp"
#include "ddgen/trainer.hpp"

namespace ddgen {

/// dv_estimate(f(X_g), f(X)) on path dual coordinates.
double divergence_gen_vs_data(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                              const ImageSet& data, const ImageSet& generated);

struct EntropyProxyConfig {
    std::size_t iters = 200;
    double learning_rate = 0.01;
    std::size_t batch_size = 256;
    double clip_norm = 1.0;
    double ema_decay = 0.99;
    std::vector<std::size_t> hidden_dims{128, 64};
    Activation activation = Activation::tanh;
    /// Share of X_g (and of the uniform draw) kept out of training and used for the estimate.
    double holdout_fraction = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

/// -D(U || X_g) from a fresh single-step dual model trained on a split of
/// the data and evaluated on the rest. 0 is the uniform maximum; degenerate
/// sets go strongly negative. Independent of the order of X_g.
double entropy_proxy(const ImageSet& generated, const EntropyProxyConfig& cfg);

/// Multi-information estimate: path divergence toward the data on
/// build_path(S, sample_marginals(S, seed)).
double mmi(const DualFunctionModel& model, const ImageSet& samples, const DiffusionSchedule& schedule,
           std::uint64_t seed);

/// Softmax divergence statistic of the union profile over that of X alone.
double cluster_novelty(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                       const ImageSet& generated, std::size_t knn_k);

/// Row-major count x dim matrix of embedding vectors.
struct Embedding {
    std::size_t count = 0;
    std::size_t dim = 0;
    std::vector<double> values;
};

/// Penultimate-layer activations averaged over the path steps.
Embedding penultimate_embedding(const DualFunctionModel& model, const ImageSet& images);

/// Frechet distance between Gaussian fits of two embeddings of equal width.
double frechet_distance(const Embedding& a, const Embedding& b);

double fid_dual(const DualFunctionModel& model, const ImageSet& data, const ImageSet& generated);

struct Theorem2Result {
    double d_knn_max = 0.0;
    double divergence = 0.0;  ///< D(X_g || X)
    double bound = 0.0;       ///< d_knn_max + log n
    double margin = 0.0;      ///< bound - divergence
};

/// Bound check on dual coordinates: D(X_g || X) <= d_knn_max + log n.
/// Throws NumericalError if the margin is negative beyond rounding.
Theorem2Result theorem2_bound(std::span<const double> data_duals, std::span<const double> generated_duals);
Theorem2Result theorem2_check(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                              const ImageSet& data, const ImageSet& generated);

/// AR(1)-correlated Gaussian images; rho = 0 gives independent pixels.
struct DistributionSpec {
    std::size_t rows = 4;
    std::size_t cols = 4;
    double rho = 0.0;
};

struct VarianceConfig {
    /// Budget shared by both estimators; path_steps is overridden per arm.
    TrainConfig train = default_train();
    std::uint64_t seed = 0;

    static TrainConfig default_train();
};

struct VarianceResult {
    std::vector<double> direct;  ///< one estimate per surviving trial
    std::vector<double> path;
    double var_direct = 0.0;
    double var_path = 0.0;
    std::size_t dropped = 0;
    std::vector<std::string> drop_reasons;
};

VarianceResult variance_experiment(const DistributionSpec& dist, std::size_t n, std::size_t trials, std::size_t k,
                                   const VarianceConfig& cfg = {});

double sample_variance(std::span<const double> values);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    [[nodiscard]] bool overlaps(const Interval& other) const noexcept { return lo <= other.hi && other.lo <= hi; }
};

/// Percentile bootstrap interval for the sample variance.
Interval bootstrap_variance_ci(std::span<const double> values, std::size_t resamples, double level,
                               std::uint64_t seed);

struct MetricsReport {
    double div_gen_vs_data = 0.0;
    double entropy_proxy = 0.0;
    double mmi_real = 0.0;
    double mmi_gen = 0.0;
    double cluster_novelty = 0.0;
    double fid_dual = 0.0;
    double theorem2_margin = 0.0;
    std::size_t walk_failure_count = 0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

struct EvaluationInputs {
    const DualFunctionModel& model;
    const NormalizedDualOffsets& offsets;
    const DiffusionSchedule& schedule;
    const ImageSet& data;
    const ImageSet& generated;
    std::size_t walk_failures = 0;
    std::size_t knn_k = 8;
    EntropyProxyConfig entropy;
    std::uint64_t seed = 0;
};

MetricsReport evaluate_metrics(const EvaluationInputs& in);

/// `metric,value` rows in field order.
std::string format_metrics_csv(const MetricsReport& report);
MetricsReport parse_metrics_csv(const std::string& text);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace ddgen
