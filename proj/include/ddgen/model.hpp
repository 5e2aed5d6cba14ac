#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddgen/image_set.hpp"
#include "ddgen/kernels.hpp"

namespace ddgen {

struct ModelConfig {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> hidden_dims{128, 64};
    Activation activation = Activation::tanh;
    /// Append j/(k-1) to the flattened image so one network serves every path step.
    bool step_conditioned = true;
    /// Feed pixels to the network as 2x - 1 so inputs are centered on zero.
    bool center_inputs = true;
    std::size_t path_steps = 4;
    /// Weights start uniform in +-init_scale/sqrt(fan_in); biases start at zero.
    double init_scale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string to_string(Activation act);
Activation parse_activation(const std::string& text);

/// Row-major feature matrix fed to the network: flattened image plus the
/// optional step feature.
struct InputBatch {
    std::size_t count = 0;
    std::size_t width = 0;
    std::vector<double> values;
};

/// Fully connected scalar network over flattened images.
///
/// All parameters live in one flat vector (per layer: weights out x in
/// row-major, then biases) so clipping, EMA and serialization treat them
/// uniformly. An EMA shadow of identical shape is kept alongside.
class DualFunctionModel {
public:
    static constexpr const char* kVersion = "1";

    struct Layer {
        std::size_t in;
        std::size_t out;
        std::size_t weight_offset;
        std::size_t bias_offset;
    };

    /// Layer outputs of a batched forward pass; activations[0] is the input.
    struct Cache {
        std::size_t count = 0;
        std::vector<std::vector<double>> activations;
    };

    explicit DualFunctionModel(ModelConfig config);
    static DualFunctionModel zeros(ModelConfig config);

    [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
    [[nodiscard]] const std::vector<Layer>& layers() const noexcept { return layers_; }
    [[nodiscard]] std::size_t pixel_count() const noexcept { return config_.rows * config_.cols; }
    [[nodiscard]] std::size_t input_width() const noexcept { return pixel_count() + (config_.step_conditioned ? 1 : 0); }
    [[nodiscard]] std::size_t path_steps() const noexcept { return config_.path_steps; }
    [[nodiscard]] std::size_t parameter_count() const noexcept { return weights_.size(); }
    [[nodiscard]] std::size_t penultimate_width() const noexcept { return layers_.back().in; }

    [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
    [[nodiscard]] std::span<double> weights() noexcept { return weights_; }
    [[nodiscard]] std::span<const double> ema() const noexcept { return ema_; }
    [[nodiscard]] std::span<double> ema() noexcept { return ema_; }

    /// ema <- decay * ema + (1 - decay) * weights
    void update_ema(double decay);
    /// Copy of this model whose live weights are the EMA shadow.
    [[nodiscard]] DualFunctionModel with_ema_weights() const;

    [[nodiscard]] double step_feature(std::size_t step) const noexcept;
    void append_input(InputBatch& batch, std::span<const double> image, std::optional<std::size_t> step) const;
    [[nodiscard]] InputBatch make_inputs(const ImageSet& images, std::optional<std::size_t> step) const;

    [[nodiscard]] Cache forward_batch(InputBatch inputs) const;
    [[nodiscard]] std::span<const double> outputs(const Cache& cache) const { return cache.activations.back(); }
    /// Accumulates d(sum_i upstream[i] * f_i)/d(params) into param_grad and, if
    /// input_grad is non-empty, writes the input gradient (count x input_width).
    void backward_batch(const Cache& cache, std::span<const double> upstream, std::span<double> param_grad,
                        std::span<double> input_grad = {}) const;

    [[nodiscard]] std::vector<double> forward(const ImageSet& images, std::optional<std::size_t> step) const;
    [[nodiscard]] double forward(std::span<const double> image, std::optional<std::size_t> step) const;
    /// d f / d pixels for one image; the step feature is not a pixel and is dropped.
    /// Includes the factor 2 of input centering.
    [[nodiscard]] std::vector<double> grad_input(std::span<const double> image, std::optional<std::size_t> step) const;

private:
    DualFunctionModel(ModelConfig config, bool randomize);
    void check_step(std::optional<std::size_t> step) const;

    ModelConfig config_;
    std::vector<Layer> layers_;
    std::vector<double> weights_;
    std::vector<double> ema_;
};

struct StepOptions {
    double learning_rate = 1e-3;
    double clip_norm = 1.0;
    double ema_decay = 0.999;
};

struct StepResult {
    double loss = 0.0;
    /// Global gradient norm before clipping.
    double grad_norm = 0.0;
};

/// Fills `param_grad` (pre-zeroed, length parameter_count()) with d loss/d params
/// and returns the loss.
using LossClosure = std::function<double(const DualFunctionModel&, std::span<double> param_grad)>;

/// One clipped gradient-descent step followed by an EMA update.
StepResult grad_params_and_step(DualFunctionModel& model, const LossClosure& loss, const StepOptions& options);

}  // namespace ddgen
