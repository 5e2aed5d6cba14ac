#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddgen/clustering.hpp"
#include "ddgen/diffusion_path.hpp"
#include "ddgen/divergence.hpp"
#include "ddgen/error.hpp"
#include "ddgen/image_set.hpp"
#include "ddgen/model.hpp"
#include "ddgen/sampler.hpp"

namespace ddgen {

struct TrainConfig {
    std::size_t iters = 2000;
    std::size_t warmup = 500;
    double learning_rate = 0.5;
    std::size_t batch_size = 256;
    std::size_t path_steps = 4;
    std::size_t knn_k = 8;
    std::size_t cut_count = 4;
    double ema_decay = 0.99;
    double clip_norm = 1.0;
    std::size_t marginal_refresh = 1;
    WalkConfig walk;
    /// Walk budget per gap for the in-loop generation step.
    std::size_t train_targets_per_gap = 2;
    double lambda_div = 1.0;
    /// Step-size multipliers for the clustering and generation steps, applied
    /// after clipping. Raise lambda_cluster to 1 for cluster discovery.
    double lambda_cluster = 0.03;
    double lambda_gen = 0.03;
    /// Aggregation of the intra-cluster term in the clustering step. The trace
    /// always records the summed form.
    ClusterReduction cluster_reduction = ClusterReduction::mean;
    std::uint64_t seed = 0;
    std::size_t early_stop_patience = 500;
    double holdout_fraction = 0.1;

    std::vector<std::size_t> hidden_dims{128, 64};
    Activation activation = Activation::tanh;
    bool step_conditioned = true;
    bool center_inputs = true;
    double init_scale = 1.0;

    void validate(std::size_t n) const;
    [[nodiscard]] ModelConfig model_config(std::size_t rows, std::size_t cols) const;
};

struct TrainRecord {
    std::size_t iteration = 0;
    double path_divergence = 0.0;       ///< D(X||Z) along the path on the batch, before the step
    double cluster_loss = 0.0;
    std::optional<double> gen_divergence;  ///< D(X||X_g) on the batch, post-warmup only
    double grad_norm = 0.0;             ///< divergence-step gradient norm before clipping
    std::optional<double> walk_success_rate;
    std::optional<double> heldout_divergence;

    friend bool operator==(const TrainRecord&, const TrainRecord&) = default;
};

struct TrainTrace {
    std::vector<TrainRecord> records;
    std::optional<std::size_t> early_stopped_at;
    friend bool operator==(const TrainTrace&, const TrainTrace&) = default;
};

struct TrainResult {
    DualFunctionModel model;  ///< EMA weights; the best held-out snapshot when a held-out split exists
    NormalizedDualOffsets offsets;
    TrainTrace trace;
    DiffusionSchedule schedule;
    std::optional<std::size_t> selected_iteration;  ///< iteration of the returned snapshot, if held out
};

/// Thrown when a loss or update turns non-finite; carries the trace so far.
class TrainAborted : public TrainingError {
public:
    TrainAborted(const std::string& what, TrainTrace trace) : TrainingError(what), trace_(std::move(trace)) {}
    [[nodiscard]] const TrainTrace& trace() const noexcept { return trace_; }

private:
    TrainTrace trace_;
};

TrainResult train(const ImageSet& data, const TrainConfig& cfg);

struct GenerationResult {
    ImageSet images;
    std::vector<double> dual_values;
    std::size_t attempts = 0;
    std::size_t failures = 0;
    std::size_t ood_rejections = 0;
    [[nodiscard]] double retention() const noexcept {
        return attempts == 0 ? 1.0 : static_cast<double>(images.count()) / static_cast<double>(attempts);
    }
};

/// Cycles over the selected gaps until `count` samples are retained or 4*count
/// walks have been attempted. Throws Error when nothing could be generated.
GenerationResult generate(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                          std::size_t count, std::size_t knn_k, std::size_t cut_count, const WalkConfig& walk);

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace);
std::string format_trace_csv(const TrainTrace& trace);
TrainTrace parse_trace_csv(const std::string& text);

}  // namespace ddgen
