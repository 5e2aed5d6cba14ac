#include "ddgen/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ddgen/clustering.hpp"
#include "ddgen/data.hpp"
#include "ddgen/error.hpp"
#include "ddgen/model_io.hpp"
#include "ddgen/seed.hpp"

namespace ddgen {
namespace {

void require_nonempty(const ImageSet& s, const char* what) {
    if (s.empty()) {
        throw ArgumentError(std::string(what) + " is empty");
    }
}

std::vector<std::size_t> canonical_order(const ImageSet& s) {
    std::vector<std::size_t> idx(s.count());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::ranges::stable_sort(idx, [&](std::size_t a, std::size_t b) {
        const auto x = s.image(a);
        const auto y = s.image(b);
        return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
    });
    return idx;
}

struct Split {
    ImageSet train;
    ImageSet test;
};

Split split_set(const ImageSet& s, std::vector<std::size_t> order, double holdout, std::mt19937_64& rng) {
    std::shuffle(order.begin(), order.end(), rng);
    auto held = static_cast<std::size_t>(std::floor(holdout * static_cast<double>(s.count())));
    if (held < 2 || s.count() - held < 2) {
        // Too small to split: train and evaluate on everything.
        return {s, s};
    }
    const std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
    const std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
    return {s.subset(train), s.subset(test)};
}

std::vector<std::size_t> draw(std::mt19937_64& rng, std::size_t n, std::size_t b) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (b >= n) {
        return idx;
    }
    for (std::size_t t = 0; t < b; ++t) {
        std::uniform_int_distribution<std::size_t> pick(t, n - 1);
        std::swap(idx[t], idx[pick(rng)]);
    }
    idx.resize(b);
    return idx;
}

/// Ascent step on dv(f(U_b), f(G_b)) for the single-step auxiliary model.
double aux_loss(const DualFunctionModel& m, const ImageSet& u, const ImageSet& g, std::span<const std::size_t> iu,
                std::span<const std::size_t> ig, std::span<double> grad) {
    InputBatch batch;
    for (std::size_t i : iu) {
        m.append_input(batch, u.image(i), 0);
    }
    for (std::size_t i : ig) {
        m.append_input(batch, g.image(i), 0);
    }
    const auto cache = m.forward_batch(std::move(batch));
    const auto out = m.outputs(cache);
    const DvGradient d = dv_estimate_with_gradient(out.first(iu.size()), out.subspan(iu.size()));
    std::vector<double> upstream(out.size());
    for (std::size_t t = 0; t < iu.size(); ++t) {
        upstream[t] = -d.d_num[t];
    }
    for (std::size_t t = 0; t < ig.size(); ++t) {
        upstream[iu.size() + t] = -d.d_den[t];
    }
    m.backward_batch(cache, upstream, grad);
    return -d.value;
}

double statistic_of(std::span<const double> duals, std::size_t knn_k) {
    return softmax_divergence_statistic(build_profile(duals, knn_k).d_knn);
}

struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

Gaussian fit(const Embedding& e) {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
        e.values.data(), static_cast<Eigen::Index>(e.count), static_cast<Eigen::Index>(e.dim));
    Gaussian g;
    g.mean = m.colwise().mean().transpose();
    const Eigen::MatrixXd centered = m.rowwise() - g.mean.transpose();
    g.cov = centered.transpose() * centered / static_cast<double>(e.count - 1);
    return g;
}

/// Eigenvalues of a symmetric PSD matrix, clamped at zero. Entries below
/// -1e-8 (relative to the spectrum scale) mean the input was not PSD.
Eigen::VectorXd psd_eigenvalues(const Eigen::MatrixXd& m, Eigen::MatrixXd* vectors, const char* what) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
    if (solver.info() != Eigen::Success) {
        throw NumericalError(std::string("eigendecomposition failed for ") + what);
    }
    Eigen::VectorXd values = solver.eigenvalues();
    const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (values[i] < -1e-8 * scale) {
            throw NumericalError(std::string(what) + " is not positive semi-definite (eigenvalue " +
                                 std::to_string(values[i]) + ")");
        }
        values[i] = std::max(values[i], 0.0);
    }
    if (vectors != nullptr) {
        *vectors = solver.eigenvectors();
    }
    return values;
}

constexpr std::array<const char*, 8> kMetricNames = {
    "div_gen_vs_data", "entropy_proxy",   "mmi_real",        "mmi_gen",
    "cluster_novelty", "fid_dual",        "theorem2_margin", "walk_failure_count",
};

}  // namespace

double divergence_gen_vs_data(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                              const ImageSet& data, const ImageSet& generated) {
    require_nonempty(data, "real sample set");
    require_nonempty(generated, "generated sample set");
    return dv_estimate(path_dual_values(model, generated, offsets), path_dual_values(model, data, offsets));
}

void EntropyProxyConfig::validate() const {
    if (batch_size < 2) {
        throw ArgumentError("entropy proxy batch_size must be at least 2");
    }
    if (!(learning_rate >= 0.0) || !(clip_norm >= 0.0)) {
        throw ArgumentError("entropy proxy learning_rate and clip_norm must be non-negative");
    }
    if (ema_decay < 0.0 || ema_decay > 1.0) {
        throw ArgumentError("entropy proxy ema_decay must lie in [0, 1]");
    }
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
        throw ArgumentError("entropy proxy holdout_fraction must lie in [0, 1)");
    }
}

double entropy_proxy(const ImageSet& generated, const EntropyProxyConfig& cfg) {
    require_nonempty(generated, "generated sample set");
    cfg.validate();
    const std::size_t n = generated.count();
    const ImageSet uniform = synth_uniform(n, generated.rows(), generated.cols(), derive_seed(cfg.seed, 1));

    std::mt19937_64 rng(derive_seed(cfg.seed, 2));
    const Split g = split_set(generated, canonical_order(generated), cfg.holdout_fraction, rng);
    std::vector<std::size_t> plain(n);
    std::iota(plain.begin(), plain.end(), std::size_t{0});
    const Split u = split_set(uniform, plain, cfg.holdout_fraction, rng);

    ModelConfig mc;
    mc.rows = generated.rows();
    mc.cols = generated.cols();
    mc.hidden_dims = cfg.hidden_dims;
    mc.activation = cfg.activation;
    mc.path_steps = 1;
    mc.seed = derive_seed(cfg.seed, 3);
    DualFunctionModel model(mc);
    const StepOptions step{cfg.learning_rate, cfg.clip_norm, cfg.ema_decay};
    for (std::size_t it = 0; it < cfg.iters; ++it) {
        const auto iu = draw(rng, u.train.count(), cfg.batch_size);
        const auto ig = draw(rng, g.train.count(), cfg.batch_size);
        grad_params_and_step(
            model,
            [&](const DualFunctionModel& m, std::span<double> grad) { return aux_loss(m, u.train, g.train, iu, ig, grad); },
            step);
    }
    const DualFunctionModel ema = model.with_ema_weights();
    const double d = dv_estimate(ema.forward(u.test, 0), ema.forward(g.test, 0));
    if (!std::isfinite(d)) {
        throw TrainingError("entropy proxy estimate is not finite");
    }
    return -d;
}

double mmi(const DualFunctionModel& model, const ImageSet& samples, const DiffusionSchedule& schedule,
           std::uint64_t seed) {
    const std::vector<ImageSet> path = build_path(samples, sample_marginals(samples, seed), schedule);
    return path_divergence(model, path, Direction::toward_data).value;
}

double cluster_novelty(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                       const ImageSet& generated, std::size_t knn_k) {
    std::vector<double> duals = path_dual_values(model, data, offsets);
    if (duals.size() < 2 * knn_k) {
        throw ArgumentError("cluster_novelty needs at least 2*knn_k real samples");
    }
    const double base = statistic_of(duals, knn_k);
    if (!(base > 0.0)) {
        throw NumericalError("real samples have a flat dual profile; cluster_novelty is undefined");
    }
    const std::vector<double> gen = path_dual_values(model, generated, offsets);
    duals.insert(duals.end(), gen.begin(), gen.end());
    return statistic_of(duals, knn_k) / base;
}

Embedding penultimate_embedding(const DualFunctionModel& model, const ImageSet& images) {
    const std::size_t width = model.penultimate_width();
    Embedding e{images.count(), width, std::vector<double>(images.count() * width, 0.0)};
    if (images.empty()) {
        return e;
    }
    const std::size_t steps = model.config().step_conditioned ? model.path_steps() : 1;
    for (std::size_t j = 0; j < steps; ++j) {
        const auto cache = model.forward_batch(model.make_inputs(images, j));
        const std::vector<double>& act = cache.activations[cache.activations.size() - 2];
        for (std::size_t t = 0; t < e.values.size(); ++t) {
            e.values[t] += act[t];
        }
    }
    for (double& v : e.values) {
        v /= static_cast<double>(steps);
    }
    return e;
}

double frechet_distance(const Embedding& a, const Embedding& b) {
    if (a.dim != b.dim) {
        throw ArgumentError("embeddings differ in width");
    }
    if (a.count < 2 || b.count < 2) {
        throw ArgumentError("Frechet distance needs at least 2 samples per set");
    }
    const Gaussian g1 = fit(a);
    const Gaussian g2 = fit(b);
    Eigen::MatrixXd vectors;
    const Eigen::VectorXd lambda2 = psd_eigenvalues(g2.cov, &vectors, "second covariance");
    const Eigen::MatrixXd root2 = vectors * lambda2.cwiseSqrt().asDiagonal() * vectors.transpose();
    const Eigen::MatrixXd inner = root2 * g1.cov * root2;
    const Eigen::VectorXd mu = psd_eigenvalues(0.5 * (inner + inner.transpose()), nullptr, "covariance product");
    const double trace_root = mu.cwiseSqrt().sum();
    const double d = (g1.mean - g2.mean).squaredNorm() + g1.cov.trace() + g2.cov.trace() - 2.0 * trace_root;
    return std::max(d, 0.0);
}

double fid_dual(const DualFunctionModel& model, const ImageSet& data, const ImageSet& generated) {
    return frechet_distance(penultimate_embedding(model, data), penultimate_embedding(model, generated));
}

Theorem2Result theorem2_bound(std::span<const double> data_duals, std::span<const double> generated_duals) {
    if (data_duals.empty() || generated_duals.empty()) {
        throw ArgumentError("theorem2 check needs non-empty real and generated sets");
    }
    std::vector<double> sorted(data_duals.begin(), data_duals.end());
    std::ranges::sort(sorted);
    Theorem2Result r;
    for (double g : generated_duals) {
        const auto it = std::ranges::lower_bound(sorted, g);
        double nearest = std::numeric_limits<double>::infinity();
        if (it != sorted.end()) {
            nearest = *it - g;
        }
        if (it != sorted.begin()) {
            nearest = std::min(nearest, g - *std::prev(it));
        }
        r.d_knn_max = std::max(r.d_knn_max, nearest);
    }
    r.divergence = dv_estimate(generated_duals, data_duals);
    r.bound = r.d_knn_max + std::log(static_cast<double>(data_duals.size()));
    r.margin = r.bound - r.divergence;
    if (r.margin < -1e-9 * std::max(1.0, std::abs(r.bound))) {
        throw NumericalError("theorem 2 bound violated: D(X_g||X) = " + format_exact(r.divergence) + " > " +
                             format_exact(r.bound));
    }
    return r;
}

Theorem2Result theorem2_check(const DualFunctionModel& model, const NormalizedDualOffsets& offsets,
                              const ImageSet& data, const ImageSet& generated) {
    require_nonempty(data, "real sample set");
    require_nonempty(generated, "generated sample set");
    return theorem2_bound(path_dual_values(model, data, offsets), path_dual_values(model, generated, offsets));
}

TrainConfig VarianceConfig::default_train() {
    TrainConfig t;
    t.iters = 1000;
    t.warmup = t.iters;
    t.lambda_cluster = 0.0;
    t.lambda_gen = 0.0;
    t.holdout_fraction = 0.0;
    t.early_stop_patience = 0;
    return t;
}

double sample_variance(std::span<const double> values) {
    if (values.size() < 2) {
        throw ArgumentError("sample variance needs at least 2 values");
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return ss / static_cast<double>(values.size() - 1);
}

VarianceResult variance_experiment(const DistributionSpec& dist, std::size_t n, std::size_t trials, std::size_t k,
                                   const VarianceConfig& cfg) {
    if (trials < 10) {
        throw ArgumentError("variance_experiment needs at least 10 trials");
    }
    if (k < 2) {
        throw ArgumentError("the path arm needs k >= 2");
    }
    struct Trial {
        double direct = 0.0;
        double path = 0.0;
        std::string error;
    };
    std::vector<Trial> out(trials);
    const auto count = static_cast<std::int64_t>(trials);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t t = 0; t < count; ++t) {
        Trial& trial = out[static_cast<std::size_t>(t)];
        const std::uint64_t trial_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(t));
        try {
            const ImageSet data = synth_gaussian_ar1(n, dist.rows, dist.cols, dist.rho, trial_seed).images;
            for (const std::size_t steps : {std::size_t{1}, k}) {
                TrainConfig tc = cfg.train;
                tc.path_steps = steps;
                tc.seed = derive_seed(trial_seed, 1);
                const TrainResult res = train(data, tc);
                const double estimate = mmi(res.model, data, res.schedule, derive_seed(trial_seed, 2));
                (steps == 1 ? trial.direct : trial.path) = estimate;
            }
        } catch (const Error& e) {
            trial.error = "trial " + std::to_string(t) + ": " + e.what();
        }
    }
    VarianceResult r;
    for (const Trial& t : out) {
        if (!t.error.empty()) {
            ++r.dropped;
            r.drop_reasons.push_back(t.error);
            continue;
        }
        r.direct.push_back(t.direct);
        r.path.push_back(t.path);
    }
    if (r.direct.size() < 2) {
        throw TrainingError("variance_experiment: fewer than 2 trials survived" +
                            (r.drop_reasons.empty() ? std::string() : " (" + r.drop_reasons.front() + ")"));
    }
    r.var_direct = sample_variance(r.direct);
    r.var_path = sample_variance(r.path);
    return r;
}

Interval bootstrap_variance_ci(std::span<const double> values, std::size_t resamples, double level,
                               std::uint64_t seed) {
    if (values.size() < 2 || resamples < 1) {
        throw ArgumentError("bootstrap needs at least 2 values and 1 resample");
    }
    if (!(level > 0.0 && level < 1.0)) {
        throw ArgumentError("confidence level must lie in (0, 1)");
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> stats(resamples);
    std::vector<double> draw_buf(values.size());
    for (double& s : stats) {
        for (double& v : draw_buf) {
            v = values[pick(rng)];
        }
        s = sample_variance(draw_buf);
    }
    std::ranges::sort(stats);
    const double tail = 0.5 * (1.0 - level);
    const auto at = [&](double q) {
        const auto i = static_cast<std::size_t>(std::floor(q * static_cast<double>(resamples - 1) + 0.5));
        return stats[std::min(i, resamples - 1)];
    };
    return {at(tail), at(1.0 - tail)};
}

MetricsReport evaluate_metrics(const EvaluationInputs& in) {
    MetricsReport r;
    r.div_gen_vs_data = divergence_gen_vs_data(in.model, in.offsets, in.data, in.generated);
    r.entropy_proxy = entropy_proxy(in.generated, in.entropy);
    r.mmi_real = mmi(in.model, in.data, in.schedule, derive_seed(in.seed, 1));
    r.mmi_gen = in.generated.count() >= 2 ? mmi(in.model, in.generated, in.schedule, derive_seed(in.seed, 2)) : 0.0;
    r.cluster_novelty = cluster_novelty(in.model, in.offsets, in.data, in.generated, in.knn_k);
    r.fid_dual = fid_dual(in.model, in.data, in.generated);
    r.theorem2_margin = theorem2_check(in.model, in.offsets, in.data, in.generated).margin;
    r.walk_failure_count = in.walk_failures;
    return r;
}

std::string format_metrics_csv(const MetricsReport& r) {
    std::ostringstream out;
    out << "metric,value\n";
    const std::array<double, 7> reals = {r.div_gen_vs_data, r.entropy_proxy,   r.mmi_real,       r.mmi_gen,
                                         r.cluster_novelty, r.fid_dual,        r.theorem2_margin};
    for (std::size_t i = 0; i < reals.size(); ++i) {
        out << kMetricNames[i] << ',' << format_exact(reals[i]) << '\n';
    }
    out << kMetricNames[7] << ',' << r.walk_failure_count << '\n';
    return out.str();
}

MetricsReport parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "metric,value") {
        throw FormatError("metrics CSV line 1: expected header 'metric,value'");
    }
    std::array<double, 7> reals{};
    std::size_t failures = 0;
    for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
        const std::string where = "metrics CSV line " + std::to_string(i + 2);
        if (!std::getline(in, line)) {
            throw FormatError(where + ": missing row '" + kMetricNames[i] + "'");
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.substr(0, comma) != kMetricNames[i]) {
            throw FormatError(where + ", column 1: expected '" + kMetricNames[i] + "'");
        }
        const char* first = line.data() + comma + 1;
        const char* last = line.data() + line.size();
        std::from_chars_result res{};
        if (i < reals.size()) {
            res = std::from_chars(first, last, reals[i]);
        } else {
            res = std::from_chars(first, last, failures);
        }
        if (res.ec != std::errc() || res.ptr != last) {
            throw FormatError(where + ", column 2: cannot parse '" + std::string(first, last) + "'");
        }
    }
    if (std::getline(in, line) && !line.empty()) {
        throw FormatError("metrics CSV line " + std::to_string(kMetricNames.size() + 2) + ": unexpected row");
    }
    return {reals[0], reals[1], reals[2], reals[3], reals[4], reals[5], reals[6], failures};
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << format_metrics_csv(report);
}

}  // namespace ddgen
