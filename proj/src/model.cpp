#include "ddgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

#include "ddgen/error.hpp"

namespace ddgen {

void ModelConfig::validate() const {
    if (rows == 0 || cols == 0) {
        throw ArgumentError("model input dimensions must be positive");
    }
    if (hidden_dims.empty()) {
        throw ArgumentError("hidden_dims must not be empty");
    }
    if (std::ranges::any_of(hidden_dims, [](std::size_t h) { return h == 0; })) {
        throw ArgumentError("hidden_dims entries must be positive");
    }
    if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
        throw ArgumentError("init_scale must be a positive finite real");
    }
    if (path_steps == 0) {
        throw ArgumentError("path_steps must be at least 1");
    }
}

std::string to_string(Activation act) { return act == Activation::tanh ? "tanh" : "softplus"; }

Activation parse_activation(const std::string& text) {
    if (text == "tanh") {
        return Activation::tanh;
    }
    if (text == "softplus") {
        return Activation::softplus;
    }
    throw ArgumentError("unknown activation '" + text + "' (expected tanh or softplus)");
}

DualFunctionModel::DualFunctionModel(ModelConfig config) : DualFunctionModel(std::move(config), true) {}

DualFunctionModel DualFunctionModel::zeros(ModelConfig config) { return DualFunctionModel(std::move(config), false); }

DualFunctionModel::DualFunctionModel(ModelConfig config, bool randomize) : config_(std::move(config)) {
    config_.validate();
    std::vector<std::size_t> dims;
    dims.push_back(input_width());
    dims.insert(dims.end(), config_.hidden_dims.begin(), config_.hidden_dims.end());
    dims.push_back(1);

    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer{dims[l], dims[l + 1], offset, offset + dims[l] * dims[l + 1]};
        offset = layer.bias_offset + layer.out;
        layers_.push_back(layer);
    }
    weights_.assign(offset, 0.0);

    if (randomize) {
        std::mt19937_64 rng(config_.seed);
        for (const Layer& layer : layers_) {
            const double bound = config_.init_scale / std::sqrt(static_cast<double>(layer.in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (std::size_t k = 0; k < layer.in * layer.out; ++k) {
                weights_[layer.weight_offset + k] = dist(rng);
            }
        }
    }
    ema_ = weights_;
}

void DualFunctionModel::update_ema(double decay) {
    for (std::size_t k = 0; k < weights_.size(); ++k) {
        ema_[k] = decay * ema_[k] + (1.0 - decay) * weights_[k];
    }
}

DualFunctionModel DualFunctionModel::with_ema_weights() const {
    DualFunctionModel copy = *this;
    copy.weights_ = ema_;
    return copy;
}

double DualFunctionModel::step_feature(std::size_t step) const noexcept {
    if (config_.path_steps <= 1) {
        return 0.0;
    }
    return static_cast<double>(step) / static_cast<double>(config_.path_steps - 1);
}

void DualFunctionModel::check_step(std::optional<std::size_t> step) const {
    if (!config_.step_conditioned) {
        return;
    }
    if (!step) {
        throw ArgumentError("step-conditioned model needs a path step");
    }
    if (*step >= config_.path_steps) {
        throw ArgumentError("path step " + std::to_string(*step) + " outside [0, " +
                            std::to_string(config_.path_steps - 1) + "]");
    }
}

void DualFunctionModel::append_input(InputBatch& batch, std::span<const double> image,
                                     std::optional<std::size_t> step) const {
    if (image.size() != pixel_count()) {
        throw ShapeError("image has " + std::to_string(image.size()) + " pixels, model expects " +
                         std::to_string(pixel_count()));
    }
    check_step(step);
    for (std::size_t k = 0; k < image.size(); ++k) {
        if (!std::isfinite(image[k])) {
            throw InputError("non-finite pixel at index " + std::to_string(k));
        }
    }
    if (batch.width == 0) {
        batch.width = input_width();
    }
    if (config_.center_inputs) {
        for (double v : image) {
            batch.values.push_back(2.0 * v - 1.0);
        }
    } else {
        batch.values.insert(batch.values.end(), image.begin(), image.end());
    }
    if (config_.step_conditioned) {
        batch.values.push_back(step_feature(*step));
    }
    ++batch.count;
}

InputBatch DualFunctionModel::make_inputs(const ImageSet& images, std::optional<std::size_t> step) const {
    if (images.pixels_per_image() != pixel_count()) {
        throw ShapeError("image set is " + std::to_string(images.rows()) + "x" + std::to_string(images.cols()) +
                         ", model expects " + std::to_string(config_.rows) + "x" + std::to_string(config_.cols));
    }
    InputBatch batch;
    batch.width = input_width();
    batch.values.reserve(images.count() * batch.width);
    for (std::size_t i = 0; i < images.count(); ++i) {
        append_input(batch, images.image(i), step);
    }
    return batch;
}

DualFunctionModel::Cache DualFunctionModel::forward_batch(InputBatch inputs) const {
    if (inputs.count > 0 && inputs.width != input_width()) {
        throw ShapeError("input width " + std::to_string(inputs.width) + " does not match model input " +
                         std::to_string(input_width()));
    }
    Cache cache;
    cache.count = inputs.count;
    cache.activations.reserve(layers_.size() + 1);
    cache.activations.push_back(std::move(inputs.values));
    const std::span<const double> params(weights_);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        std::vector<double> out(cache.count * layer.out);
        kernels::omp::dense_forward({cache.count, layer.in, layer.out}, cache.activations[l],
                                    params.subspan(layer.weight_offset, layer.in * layer.out),
                                    params.subspan(layer.bias_offset, layer.out), out);
        if (l + 1 < layers_.size()) {
            kernels::omp::activate(config_.activation, out);
        }
        cache.activations.push_back(std::move(out));
    }
    return cache;
}

void DualFunctionModel::backward_batch(const Cache& cache, std::span<const double> upstream,
                                       std::span<double> param_grad, std::span<double> input_grad) const {
    if (upstream.size() != cache.count) {
        throw ShapeError("upstream gradient length does not match batch");
    }
    if (param_grad.size() != weights_.size()) {
        throw ShapeError("parameter gradient buffer has wrong length");
    }
    const bool want_input = !input_grad.empty();
    if (want_input && input_grad.size() != cache.count * input_width()) {
        throw ShapeError("input gradient buffer has wrong length");
    }
    const std::span<const double> params(weights_);
    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        const kernels::DenseShape shape{cache.count, layer.in, layer.out};
        kernels::omp::dense_backward_params(shape, cache.activations[l], delta,
                                            param_grad.subspan(layer.weight_offset, layer.in * layer.out),
                                            param_grad.subspan(layer.bias_offset, layer.out));
        if (l == 0 && !want_input) {
            break;
        }
        std::vector<double> dx(cache.count * layer.in);
        kernels::omp::dense_backward_input(shape, params.subspan(layer.weight_offset, layer.in * layer.out), delta,
                                           dx);
        if (l > 0) {
            kernels::omp::activation_backward(config_.activation, cache.activations[l], dx);
            delta = std::move(dx);
        } else {
            std::ranges::copy(dx, input_grad.begin());
        }
    }
}

std::vector<double> DualFunctionModel::forward(const ImageSet& images, std::optional<std::size_t> step) const {
    if (images.empty()) {
        throw ArgumentError("forward needs a non-empty image set");
    }
    const Cache cache = forward_batch(make_inputs(images, step));
    const auto out = outputs(cache);
    return {out.begin(), out.end()};
}

double DualFunctionModel::forward(std::span<const double> image, std::optional<std::size_t> step) const {
    InputBatch batch;
    append_input(batch, image, step);
    return outputs(forward_batch(std::move(batch)))[0];
}

std::vector<double> DualFunctionModel::grad_input(std::span<const double> image,
                                                  std::optional<std::size_t> step) const {
    InputBatch batch;
    append_input(batch, image, step);
    const Cache cache = forward_batch(std::move(batch));
    std::vector<double> scratch(weights_.size(), 0.0);
    std::vector<double> dx(input_width());
    const double one = 1.0;
    backward_batch(cache, std::span<const double>(&one, 1), scratch, dx);
    dx.resize(pixel_count());
    if (config_.center_inputs) {
        for (double& g : dx) {
            g *= 2.0;
        }
    }
    return dx;
}

StepResult grad_params_and_step(DualFunctionModel& model, const LossClosure& loss, const StepOptions& options) {
    std::vector<double> grad(model.parameter_count(), 0.0);
    StepResult result;
    result.loss = loss(model, grad);
    if (!std::isfinite(result.loss)) {
        throw TrainingError("non-finite loss (" + std::to_string(result.loss) + ")");
    }
    double sq = 0.0;
    for (double g : grad) {
        sq += g * g;
    }
    result.grad_norm = std::sqrt(sq);
    if (!std::isfinite(result.grad_norm)) {
        throw TrainingError("non-finite gradient norm at loss " + std::to_string(result.loss));
    }
    double scale = 1.0;
    if (options.clip_norm <= 0.0) {
        scale = 0.0;
    } else if (result.grad_norm > options.clip_norm) {
        scale = options.clip_norm / result.grad_norm;
    }
    const double rate = options.learning_rate * scale;
    auto w = model.weights();
    if (rate != 0.0) {
        for (std::size_t k = 0; k < w.size(); ++k) {
            w[k] -= rate * grad[k];
        }
    }
    if (!std::ranges::all_of(w, [](double v) { return std::isfinite(v); })) {
        throw TrainingError("parameter update produced non-finite weights");
    }
    model.update_ema(options.ema_decay);
    return result;
}

}  // namespace ddgen
