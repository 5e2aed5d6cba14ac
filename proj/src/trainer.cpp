#include "ddgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ddgen/clustering.hpp"
#include "ddgen/model_io.hpp"
#include "ddgen/seed.hpp"

namespace ddgen {
namespace {

std::vector<std::size_t> draw_batch(std::mt19937_64& rng, std::size_t n, std::size_t b) {
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

/// Inputs for every (image, step) pair, image-major: row i*k + j.
void append_all_steps(const DualFunctionModel& model, InputBatch& batch, const ImageSet& set,
                      std::span<const std::size_t> idx) {
    for (std::size_t i : idx) {
        for (std::size_t j = 0; j < model.path_steps(); ++j) {
            model.append_input(batch, set.image(i), j);
        }
    }
}

/// -lambda * sum_j dv(f(Z^j_B, j), f(Z^{j+1}_B, j)); returns the unweighted sum via `estimate`.
double divergence_loss(const DualFunctionModel& model, const std::vector<ImageSet>& path,
                       std::span<const std::size_t> idx, double lambda, std::span<double> grad, double& estimate) {
    const std::size_t k = path.size() - 1;
    const std::size_t b = idx.size();
    InputBatch batch;
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i : idx) {
            model.append_input(batch, path[j].image(i), j);
        }
        for (std::size_t i : idx) {
            model.append_input(batch, path[j + 1].image(i), j);
        }
    }
    const auto cache = model.forward_batch(std::move(batch));
    const auto out = model.outputs(cache);
    std::vector<double> upstream(out.size());
    estimate = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const auto num = out.subspan(2 * j * b, b);
        const auto den = out.subspan(2 * j * b + b, b);
        const DvGradient g = dv_estimate_with_gradient(num, den);
        estimate += g.value;
        for (std::size_t t = 0; t < b; ++t) {
            upstream[2 * j * b + t] = -lambda * g.d_num[t];
            upstream[2 * j * b + b + t] = -lambda * g.d_den[t];
        }
    }
    model.backward_batch(cache, upstream, grad);
    return -lambda * estimate;
}

/// l_c on the dual profile of the batch.
double cluster_loss(const DualFunctionModel& model, const ImageSet& data, std::span<const std::size_t> idx,
                    std::size_t knn_k, ClusterReduction reduction, std::span<double> grad,
                    double& value) {
    const std::size_t k = model.path_steps();
    InputBatch batch;
    append_all_steps(model, batch, data, idx);
    const auto cache = model.forward_batch(std::move(batch));
    const auto out = model.outputs(cache);
    std::vector<double> duals(idx.size(), 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            duals[i] += out[i * k + j];
        }
    }
    const DualProfile profile = build_profile(duals, knn_k);
    value = clustering_loss(profile.d_knn);
    const std::vector<double> dl = clustering_loss_gradient(profile, reduction);
    std::vector<double> upstream(out.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            upstream[i * k + j] = dl[i];
        }
    }
    model.backward_batch(cache, upstream, grad);
    return clustering_loss(profile.d_knn, reduction);
}

/// -dv(f(X_B), f(X_g)) on summed step outputs, the same argument
/// order as the divergence step. Offsets shift both sides equally and so drop
/// out of the estimate and its gradient.
double generated_loss(const DualFunctionModel& model, const ImageSet& generated, const ImageSet& data,
                      std::span<const std::size_t> idx, std::span<double> grad, double& value) {
    const std::size_t k = model.path_steps();
    std::vector<std::size_t> all(generated.count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    InputBatch batch;
    append_all_steps(model, batch, generated, all);
    append_all_steps(model, batch, data, idx);
    const auto cache = model.forward_batch(std::move(batch));
    const auto out = model.outputs(cache);
    const std::size_t m = generated.count();
    std::vector<double> fg(m, 0.0);
    std::vector<double> fx(idx.size(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            fg[i] += out[i * k + j];
        }
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            fx[i] += out[(m + i) * k + j];
        }
    }
    const DvGradient g = dv_estimate_with_gradient(fx, fg);
    value = g.value;
    std::vector<double> upstream(out.size());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            upstream[i * k + j] = -g.d_den[i];
        }
    }
    for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            upstream[(m + i) * k + j] = -g.d_num[i];
        }
    }
    model.backward_batch(cache, upstream, grad);
    return -value;
}

std::string opt_cell(const std::optional<double>& v) { return v ? format_exact(*v) : std::string(); }

}  // namespace

void TrainConfig::validate(std::size_t n) const {
    if (warmup > iters) {
        throw ArgumentError("warmup (" + std::to_string(warmup) + ") exceeds iters (" + std::to_string(iters) + ")");
    }
    if (lambda_div < 0.0 || lambda_cluster < 0.0 || lambda_gen < 0.0) {
        throw ArgumentError("loss weights must be non-negative");
    }
    if (batch_size < 2) {
        throw ArgumentError("batch_size must be at least 2");
    }
    if (n < 2) {
        throw ArgumentError("training needs at least 2 images");
    }
    if (!(learning_rate >= 0.0) || !(clip_norm >= 0.0)) {
        throw ArgumentError("learning_rate and clip_norm must be non-negative");
    }
    if (ema_decay < 0.0 || ema_decay > 1.0) {
        throw ArgumentError("ema_decay must lie in [0, 1]");
    }
    if (path_steps < 1) {
        throw ArgumentError("path_steps must be at least 1");
    }
    if (marginal_refresh < 1) {
        throw ArgumentError("marginal_refresh must be at least 1");
    }
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
        throw ArgumentError("holdout_fraction must lie in [0, 1)");
    }
    if (knn_k < 2) {
        throw ArgumentError("knn_k must be at least 2");
    }
    if (cut_count < 1) {
        throw ArgumentError("cut_count must be at least 1");
    }
    walk.validate();
}

ModelConfig TrainConfig::model_config(std::size_t rows, std::size_t cols) const {
    ModelConfig m;
    m.rows = rows;
    m.cols = cols;
    m.hidden_dims = hidden_dims;
    m.activation = activation;
    m.step_conditioned = step_conditioned;
    m.center_inputs = center_inputs;
    m.path_steps = path_steps;
    m.init_scale = init_scale;
    m.seed = seed;
    return m;
}

TrainResult train(const ImageSet& data, const TrainConfig& cfg) {
    if (data.count() < 2) {
        throw ArgumentError("training needs at least 2 images");
    }
    data.validate();
    cfg.validate(data.count());
    const DiffusionSchedule schedule = default_schedule(data.cols(), cfg.path_steps);
    DualFunctionModel model(cfg.model_config(data.rows(), data.cols()));

    std::mt19937_64 rng(derive_seed(cfg.seed, 1));
    std::vector<std::size_t> order(data.count());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t holdout = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(data.count())));
    if (holdout < 2 || data.count() - holdout < 2) {
        holdout = 0;
    }
    std::vector<std::size_t> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
    std::vector<std::size_t> kept(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
    std::ranges::sort(held);
    std::ranges::sort(kept);
    const ImageSet train_set = data.subset(kept);
    const std::size_t n = train_set.count();
    const std::size_t batch_size = std::min(cfg.batch_size, n);
    if ((cfg.lambda_cluster > 0.0 || cfg.lambda_gen > 0.0) && batch_size < 2 * cfg.knn_k) {
        throw ArgumentError("batch_size must be at least 2*knn_k for the clustering and generation steps");
    }

    std::vector<ImageSet> heldout_path;
    if (holdout > 0) {
        const ImageSet held_set = data.subset(held);
        heldout_path = build_path(held_set, sample_marginals(held_set, derive_seed(cfg.seed, 2)), schedule);
    }

    std::vector<ImageSet> path;
    const StepOptions step{cfg.learning_rate, cfg.clip_norm, cfg.ema_decay};
    // The auxiliary terms clip their unweighted gradient and carry lambda in the rate,
    // so a steep clustering or generation gradient cannot outweigh the divergence step.
    const StepOptions cluster_step{cfg.learning_rate * cfg.lambda_cluster, cfg.clip_norm, cfg.ema_decay};
    const StepOptions gen_step{cfg.learning_rate * cfg.lambda_gen, cfg.clip_norm, cfg.ema_decay};
    TrainTrace trace;
    double best_heldout = -std::numeric_limits<double>::infinity();
    std::size_t best_iter = 0;
    std::optional<DualFunctionModel> best_model;

    WalkConfig inner_walk = cfg.walk;
    inner_walk.targets_per_gap = cfg.train_targets_per_gap;

    try {
        for (std::size_t it = 0; it < cfg.iters; ++it) {
            if (it % cfg.marginal_refresh == 0) {
                path = build_path(train_set, sample_marginals(train_set, derive_seed(cfg.seed, 100 + it)), schedule);
            }
            TrainRecord rec;
            rec.iteration = it;
            const std::vector<std::size_t> idx = draw_batch(rng, n, batch_size);

            const StepResult div = grad_params_and_step(
                model,
                [&](const DualFunctionModel& m, std::span<double> g) {
                    return divergence_loss(m, path, idx, cfg.lambda_div, g, rec.path_divergence);
                },
                step);
            rec.grad_norm = div.grad_norm;
            if (!std::isfinite(rec.path_divergence)) {
                throw TrainingError("non-finite path divergence");
            }

            if (cfg.lambda_cluster > 0.0) {
                grad_params_and_step(
                    model,
                    [&](const DualFunctionModel& m, std::span<double> g) {
                        return cluster_loss(m, train_set, idx, cfg.knn_k, cfg.cluster_reduction, g,
                                            rec.cluster_loss);
                    },
                    cluster_step);
            } else {
                const std::vector<double> duals = summed_step_outputs(model, train_set.subset(idx));
                rec.cluster_loss = batch_size >= 2 * cfg.knn_k ? clustering_loss(build_profile(duals, cfg.knn_k).d_knn)
                                                               : 0.0;
            }

            if (it >= cfg.warmup && cfg.lambda_gen > 0.0) {
                const ImageSet xb = train_set.subset(idx);
                std::vector<ImageSet> batch_path;
                batch_path.reserve(path.size());
                for (const ImageSet& s : path) {
                    batch_path.push_back(s.subset(idx));
                }
                const NormalizedDualOffsets offsets = compute_offsets(model, batch_path);
                inner_walk.seed = derive_seed(cfg.seed, 1'000'000 + it);
                const std::size_t cuts =
                    std::min(cfg.cut_count, build_profile(path_dual_values(model, xb, offsets), cfg.knn_k).d_knn.size());
                const SampleBatch gen = sample_via_gradient_walk(model, offsets, xb, cfg.knn_k, cuts, inner_walk);
                rec.walk_success_rate = gen.attempts == 0 ? 0.0
                                                          : static_cast<double>(gen.images.count()) /
                                                                static_cast<double>(gen.attempts);
                if (!gen.images.empty()) {
                    std::vector<std::size_t> all(xb.count());
                    std::iota(all.begin(), all.end(), std::size_t{0});
                    double value = 0.0;
                    grad_params_and_step(
                        model,
                        [&](const DualFunctionModel& m, std::span<double> g) {
                            return generated_loss(m, gen.images, xb, all, g, value);
                        },
                        gen_step);
                    rec.gen_divergence = value;
                }
            }

            if (!heldout_path.empty()) {
                DualFunctionModel ema = model.with_ema_weights();
                const double held_value = path_divergence(ema, heldout_path, Direction::toward_data).value;
                rec.heldout_divergence = held_value;
                if (held_value > best_heldout) {
                    best_heldout = held_value;
                    best_iter = it;
                    best_model = std::move(ema);
                }
            }
            trace.records.push_back(rec);
            if (!heldout_path.empty() && cfg.early_stop_patience > 0 && it - best_iter >= cfg.early_stop_patience) {
                trace.early_stopped_at = it;
                break;
            }
        }
    } catch (const TrainingError& e) {
        throw TrainAborted(std::string("training aborted at iteration ") + std::to_string(trace.records.size()) +
                               ": " + e.what(),
                           trace);
    }

    if (path.empty()) {
        path = build_path(train_set, sample_marginals(train_set, derive_seed(cfg.seed, 100)), schedule);
    }
    // With a held-out split the best held-out EMA snapshot is returned.
    const bool use_best = best_model.has_value();
    DualFunctionModel final_model = use_best ? std::move(*best_model) : model.with_ema_weights();
    NormalizedDualOffsets offsets = compute_offsets(final_model, path);
    std::optional<std::size_t> selected;
    if (use_best) {
        selected = best_iter;
    }
    return TrainResult{std::move(final_model), std::move(offsets), std::move(trace), schedule, selected};
}

GenerationResult generate(const DualFunctionModel& model, const NormalizedDualOffsets& offsets, const ImageSet& data,
                          std::size_t count, std::size_t knn_k, std::size_t cut_count, const WalkConfig& walk) {
    GenerationResult result;
    result.images = ImageSet(0, data.rows(), data.cols(), SetTag::generated);
    if (count == 0) {
        return result;
    }
    const GapPlan plan = plan_gaps(model, offsets, data, knn_k, cut_count, walk);
    const std::size_t budget = 4 * count;
    for (std::size_t round = 0; result.images.count() < count && result.attempts < budget; ++round) {
        std::vector<WalkTask> tasks = plan_targets(plan, walk.targets_per_gap, round, walk.seed);
        const std::size_t remaining_budget = budget - result.attempts;
        // Never launch more walks than could still be kept or afforded.
        const std::size_t wanted = std::min(count - result.images.count(), remaining_budget);
        if (tasks.size() > wanted) {
            // Keep whole cycles over gaps: interleave gaps so truncation stays balanced.
            std::vector<WalkTask> interleaved;
            interleaved.reserve(tasks.size());
            const std::size_t per = walk.targets_per_gap;
            for (std::size_t m = 0; m < per; ++m) {
                for (std::size_t g = 0; g < plan.cuts.count(); ++g) {
                    interleaved.push_back(tasks[g * per + m]);
                }
            }
            interleaved.resize(wanted);
            tasks = std::move(interleaved);
        }
        const SampleBatch batch = run_walks(model, offsets, data, plan, tasks, walk, result.attempts);
        result.attempts += batch.attempts;
        result.failures += batch.failures;
        result.ood_rejections += batch.ood_rejections;
        for (std::size_t i = 0; i < batch.images.count(); ++i) {
            result.images.append(batch.images.image(i));
            result.dual_values.push_back(batch.dual_values[i]);
        }
    }
    if (result.images.empty()) {
        throw Error("generation produced no samples in " + std::to_string(result.attempts) + " walks (" +
                    std::to_string(result.failures) + " exhausted, " + std::to_string(result.ood_rejections) +
                    " out of range)");
    }
    return result;
}

std::string format_trace_csv(const TrainTrace& trace) {
    std::ostringstream out;
    out << "iteration,path_divergence,cluster_loss,gen_divergence,grad_norm,walk_success_rate,heldout_divergence\n";
    for (const TrainRecord& r : trace.records) {
        out << r.iteration << ',' << format_exact(r.path_divergence) << ',' << format_exact(r.cluster_loss) << ','
            << opt_cell(r.gen_divergence) << ',' << format_exact(r.grad_norm) << ',' << opt_cell(r.walk_success_rate)
            << ',' << opt_cell(r.heldout_divergence) << '\n';
    }
    if (trace.early_stopped_at) {
        out << "# early_stopped_at=" << *trace.early_stopped_at << '\n';
    }
    return out.str();
}

void write_trace_csv(const std::filesystem::path& path, const TrainTrace& trace) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << format_trace_csv(trace);
}

TrainTrace parse_trace_csv(const std::string& text) {
    TrainTrace trace;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    auto number = [&](const std::string& cell) {
        try {
            std::size_t used = 0;
            const double v = std::stod(cell, &used);
            if (used != cell.size()) {
                throw std::invalid_argument(cell);
            }
            return v;
        } catch (const std::exception&) {
            throw FormatError("trace line " + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
        }
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) {
            continue;
        }
        if (line.rfind("# early_stopped_at=", 0) == 0) {
            trace.early_stopped_at = static_cast<std::size_t>(number(line.substr(19)));
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (line.back() == ',') {
            cells.emplace_back();
        }
        if (cells.size() != 7) {
            throw FormatError("trace line " + std::to_string(line_no) + ": expected 7 cells");
        }
        auto opt = [&](const std::string& c) { return c.empty() ? std::optional<double>{} : number(c); };
        TrainRecord r;
        r.iteration = static_cast<std::size_t>(number(cells[0]));
        r.path_divergence = number(cells[1]);
        r.cluster_loss = number(cells[2]);
        r.gen_divergence = opt(cells[3]);
        r.grad_norm = number(cells[4]);
        r.walk_success_rate = opt(cells[5]);
        r.heldout_divergence = opt(cells[6]);
        trace.records.push_back(r);
    }
    return trace;
}

}  // namespace ddgen
