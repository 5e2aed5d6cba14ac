#include "ddgen/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ddgen/error.hpp"

namespace ddgen {
namespace {

void require_non_empty(std::span<const double> v, const char* what) {
    if (v.empty()) {
        throw ArgumentError(std::string(what) + " must not be empty");
    }
}

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw ArgumentError(std::string(what) + " contains a non-finite value");
        }
    }
}

void require_offsets(const DualFunctionModel& model, const NormalizedDualOffsets& offsets) {
    if (offsets.eta.size() != model.path_steps()) {
        throw ArgumentError("offsets have " + std::to_string(offsets.eta.size()) + " steps, model has " +
                            std::to_string(model.path_steps()));
    }
}

}  // namespace

double logsumexp(std::span<const double> v) {
    require_non_empty(v, "logsumexp input");
    const double m = *std::ranges::max_element(v);
    if (std::isinf(m)) {
        return m;
    }
    double acc = 0.0;
    for (double x : v) {
        acc += std::exp(x - m);
    }
    return m + std::log(acc);
}

double logmeanexp(std::span<const double> v) {
    return logsumexp(v) - std::log(static_cast<double>(v.size()));
}

std::vector<double> softmax(std::span<const double> v) {
    const double lse = logsumexp(v);
    std::vector<double> out(v.size());
    std::ranges::transform(v, out.begin(), [lse](double x) { return std::exp(x - lse); });
    return out;
}

double dv_estimate(std::span<const double> f_num, std::span<const double> f_den) {
    require_non_empty(f_num, "dv_estimate numerator");
    require_non_empty(f_den, "dv_estimate denominator");
    require_finite(f_num, "dv_estimate numerator");
    require_finite(f_den, "dv_estimate denominator");
    double mean = 0.0;
    for (double x : f_num) {
        mean += x;
    }
    mean /= static_cast<double>(f_num.size());
    return mean - logmeanexp(f_den);
}

DvGradient dv_estimate_with_gradient(std::span<const double> f_num, std::span<const double> f_den) {
    DvGradient g;
    g.value = dv_estimate(f_num, f_den);
    g.d_num.assign(f_num.size(), 1.0 / static_cast<double>(f_num.size()));
    g.d_den = softmax(f_den);
    for (double& d : g.d_den) {
        d = -d;
    }
    return g;
}

NormalizedDualOffsets normalize_dual(const std::vector<std::vector<double>>& f_values_per_step) {
    NormalizedDualOffsets offsets;
    offsets.eta.reserve(f_values_per_step.size());
    for (std::size_t j = 0; j < f_values_per_step.size(); ++j) {
        if (f_values_per_step[j].empty()) {
            throw ArgumentError("normalize_dual: step " + std::to_string(j) + " has no values");
        }
        offsets.eta.push_back(logmeanexp(f_values_per_step[j]));
    }
    return offsets;
}

NormalizedDualOffsets compute_offsets(const DualFunctionModel& model, std::span<const ImageSet> path) {
    const std::size_t k = model.path_steps();
    if (path.size() != k + 1) {
        throw ArgumentError("compute_offsets needs " + std::to_string(k + 1) + " path sets, got " +
                            std::to_string(path.size()));
    }
    std::vector<std::vector<double>> values;
    values.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        values.push_back(model.forward(path[j + 1], j));
    }
    return normalize_dual(values);
}

namespace {

// Row i*k + j holds f(image i, step j).
std::vector<double> step_outputs(const DualFunctionModel& model, const ImageSet& images) {
    const std::size_t k = model.path_steps();
    InputBatch batch;
    batch.width = model.input_width();
    batch.values.reserve(images.count() * k * batch.width);
    for (std::size_t i = 0; i < images.count(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            model.append_input(batch, images.image(i), j);
        }
    }
    const auto cache = model.forward_batch(std::move(batch));
    const auto out = model.outputs(cache);
    return {out.begin(), out.end()};
}

}  // namespace

std::vector<double> summed_step_outputs(const DualFunctionModel& model, const ImageSet& images) {
    const std::size_t k = model.path_steps();
    const std::vector<double> out = step_outputs(model, images);
    std::vector<double> sums(images.count(), 0.0);
    for (std::size_t i = 0; i < images.count(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            sums[i] += out[i * k + j];
        }
    }
    return sums;
}

std::vector<double> path_dual_values(const DualFunctionModel& model, const ImageSet& images,
                                     const NormalizedDualOffsets& offsets) {
    require_offsets(model, offsets);
    if (images.pixels_per_image() != model.pixel_count()) {
        throw ShapeError("image set does not match model input shape");
    }
    const std::size_t k = model.path_steps();
    const std::vector<double> out = step_outputs(model, images);
    std::vector<double> values(images.count(), 0.0);
    for (std::size_t i = 0; i < images.count(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            values[i] += out[i * k + j] - offsets.eta[j];
        }
    }
    return values;
}

double path_dual_value(const DualFunctionModel& model, std::span<const double> image,
                       const NormalizedDualOffsets& offsets) {
    require_offsets(model, offsets);
    ImageSet single(model.config().rows, model.config().cols, std::vector<double>(image.begin(), image.end()));
    return path_dual_values(model, single, offsets)[0];
}

DualValueAndGradient path_dual_value_and_gradient(const DualFunctionModel& model, std::span<const double> image,
                                                  const NormalizedDualOffsets& offsets) {
    require_offsets(model, offsets);
    const std::size_t k = model.path_steps();
    InputBatch batch;
    for (std::size_t j = 0; j < k; ++j) {
        model.append_input(batch, image, j);
    }
    const auto cache = model.forward_batch(std::move(batch));
    const auto out = model.outputs(cache);
    DualValueAndGradient result;
    for (std::size_t j = 0; j < k; ++j) {
        result.value += out[j] - offsets.eta[j];
    }
    std::vector<double> upstream(k, 1.0);
    std::vector<double> scratch(model.parameter_count(), 0.0);
    std::vector<double> dx(k * model.input_width());
    model.backward_batch(cache, upstream, scratch, dx);
    result.gradient.assign(model.pixel_count(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t p = 0; p < result.gradient.size(); ++p) {
            result.gradient[p] += dx[j * model.input_width() + p];
        }
    }
    if (model.config().center_inputs) {
        for (double& g : result.gradient) {
            g *= 2.0;
        }
    }
    return result;
}

std::vector<double> path_dual_gradient(const DualFunctionModel& model, std::span<const double> image,
                                       const NormalizedDualOffsets& offsets) {
    return path_dual_value_and_gradient(model, image, offsets).gradient;
}

DivergenceEstimate path_divergence(const DualFunctionModel& model, std::span<const ImageSet> path,
                                   Direction direction) {
    if (path.size() < 2) {
        throw ArgumentError("path_divergence needs at least 2 sample sets, got " + std::to_string(path.size()));
    }
    for (const ImageSet& s : path) {
        if (!s.same_shape(path.front())) {
            throw ArgumentError("path sets differ in image dimensions");
        }
    }
    const std::size_t k = path.size() - 1;
    if (model.config().step_conditioned && k != model.path_steps()) {
        throw ArgumentError("path has " + std::to_string(k) + " steps, model is conditioned on " +
                            std::to_string(model.path_steps()));
    }
    DivergenceEstimate est;
    est.per_step.reserve(k);
    for (std::size_t j = 0; j < k; ++j) {
        const std::vector<double> lower = model.forward(path[j], j);
        const std::vector<double> upper = model.forward(path[j + 1], j);
        const double d =
            direction == Direction::toward_marginal ? dv_estimate(upper, lower) : dv_estimate(lower, upper);
        est.per_step.push_back(d);
        est.value += d;
    }
    if (direction == Direction::toward_marginal) {
        est.numerator_count = path.back().count();
        est.denominator_count = path.front().count();
    } else {
        est.numerator_count = path.front().count();
        est.denominator_count = path.back().count();
    }
    return est;
}

}  // namespace ddgen
