#include "ddgen/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ddgen/clustering.hpp"
#include "ddgen/config.hpp"
#include "ddgen/data.hpp"
#include "ddgen/error.hpp"
#include "ddgen/metrics.hpp"
#include "ddgen/parallel.hpp"

namespace ddgen::cli {
namespace {

constexpr const char* kTrainPrefix = "train.";

std::string join_doubles(std::span<const double> values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += (i ? "," : "") + format_exact(values[i]);
    }
    return out;
}

std::string encode_schedule(const DiffusionSchedule& s) {
    std::string out;
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        out += b ? ";" : "";
        for (std::size_t i = 0; i < s.blocks[b].size(); ++i) {
            out += (i ? "," : "") + std::to_string(s.blocks[b][i]);
        }
    }
    return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        parts.push_back(item);
    }
    return parts;
}

template <typename T>
T parse_entry(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    try {
        T v{};
        if constexpr (std::is_floating_point_v<T>) {
            v = std::stod(text, &used);
        } else {
            v = static_cast<T>(std::stoull(text, &used));
        }
        if (used == text.size()) {
            return v;
        }
    } catch (const std::exception&) {
    }
    throw FormatError("ddm entry '" + key + "' has malformed value '" + text + "'");
}

DiffusionSchedule decode_schedule(const std::string& text, std::size_t cols) {
    DiffusionSchedule s;
    s.cols = cols;
    for (const std::string& block : split(text, ';')) {
        std::vector<std::size_t> columns;
        for (const std::string& c : split(block, ',')) {
            columns.push_back(parse_entry<std::size_t>("schedule", c));
        }
        s.blocks.push_back(std::move(columns));
    }
    try {
        s.validate();
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("ddm entry 'schedule': ") + e.what());
    }
    return s;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw Error("cannot write '" + path.string() + "'");
    }
}

struct IngestArgs {
    std::string input;
    std::size_t window = 0;
    std::size_t stride = 0;
    std::string norm = "global";
    std::string out;
};

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string trace;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> iters;
};

struct GenerateArgs {
    std::string model;
    std::string data;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string out;
    std::string profile;
};

struct EvalArgs {
    std::string model;
    std::string real;
    std::string gen;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t walk_failures = 0;
};

struct ReportArgs {
    std::string real;
    std::string gen;
    std::string profile;
    std::string out_dir;
    std::size_t max_images = 16;
    std::size_t cut_count = 4;
};

int do_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
    WindowSpec spec;
    spec.window = a.window;
    spec.stride = a.stride;
    spec.normalization = a.norm == "global" ? Normalization::global_minmax : Normalization::per_image_minmax;
    const WindowResult r = window_series(load_csv(a.input), spec);
    if (r.degenerate_range) {
        err << "warning: zero value range; affected pixels set to 0.5\n";
    }
    write_dds(r.images, a.out);
    out << "wrote " << r.images.count() << " images of " << r.images.rows() << "x" << r.images.cols() << " to "
        << a.out << "\n";
    return 0;
}

int do_train(const TrainArgs& a, std::ostream& out) {
    TrainConfig cfg = load_train_config(a.config);
    for (const std::string& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ArgumentError("--set expects key=value, got '" + kv + "'");
        }
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (a.seed) {
        cfg.seed = *a.seed;
    }
    if (a.iters) {
        cfg.iters = *a.iters;
    }
    const ImageSet data = read_dds(a.data);
    const TrainResult result = train(data, cfg);
    write_ddm(a.out, result.model, training_extras(result, cfg));
    if (!a.trace.empty()) {
        write_trace_csv(a.trace, result.trace);
    }
    const auto& records = result.trace.records;
    out << "trained " << records.size() << " iterations";
    if (!records.empty()) {
        out << "; last batch D(X||Z) = " << format_exact(records.back().path_divergence);
    }
    if (result.selected_iteration) {
        out << "; kept held-out best from iteration " << *result.selected_iteration;
    }
    out << "\n";
    return 0;
}

int do_generate(const GenerateArgs& a, std::ostream& out) {
    const TrainedArtifacts t = read_trained_model(a.model);
    const ImageSet data = read_dds(a.data);
    WalkConfig walk = t.config.walk;
    walk.seed = a.seed;
    const GenerationResult g =
        generate(t.model, t.offsets, data, a.count, t.config.knn_k, t.config.cut_count, walk);
    write_dds(g.images, a.out);
    if (!a.profile.empty()) {
        write_profile_csv(a.profile, build_profile(path_dual_values(t.model, data, t.offsets), t.config.knn_k));
    }
    out << "retained " << g.images.count() << " of " << g.attempts << " walks (" << g.failures << " exhausted, "
        << g.ood_rejections << " out of range)\n";
    return 0;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
    const TrainedArtifacts t = read_trained_model(a.model);
    const ImageSet real = read_dds(a.real);
    ImageSet gen = read_dds(a.gen);
    gen.set_tag(SetTag::generated);
    EvaluationInputs in{t.model, t.offsets, t.schedule, real, gen, 0, 8, {}, 0};
    in.walk_failures = a.walk_failures;
    in.knn_k = t.config.knn_k;
    in.entropy.seed = a.seed;
    in.seed = a.seed;
    const MetricsReport report = evaluate_metrics(in);
    write_metrics_csv(a.out, report);
    out << format_metrics_csv(report);
    return 0;
}

int do_report(const ReportArgs& a, std::ostream& out) {
    const ImageSet real = read_dds(a.real);
    const ImageSet gen = read_dds(a.gen);
    const std::vector<ProfileRow> rows = read_profile_csv(a.profile);
    std::filesystem::create_directories(a.out_dir);
    const std::filesystem::path dir(a.out_dir);

    std::size_t written = 0;
    auto dump = [&](const ImageSet& set, const std::string& prefix) {
        const std::size_t m = std::min(set.count(), a.max_images);
        for (std::size_t i = 0; i < m; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "%s_%03zu.pgm", prefix.c_str(), i);
            write_file(dir / name, encode_pgm(set.image(i), set.rows(), set.cols()));
            ++written;
        }
    };
    dump(real, "real");
    dump(gen, "gen");

    // Recover the profile's cut points: c largest d_knn, ties to the lower rank.
    DualProfile profile;
    for (const ProfileRow& r : rows) {
        if (r.has_d_knn) {
            if (profile.d_knn.empty()) {
                profile.knn_k = r.rank;
            }
            profile.d_knn.push_back(r.d_knn);
        }
    }
    std::vector<std::size_t> cuts;
    if (!profile.d_knn.empty() && a.cut_count > 0) {
        cuts = select_cut_points(profile, std::min(a.cut_count, profile.d_knn.size())).indices;
    }
    write_file(dir / "profile.svg", render_profile_svg(rows, cuts));
    out << "wrote " << written << " heatmaps and profile.svg to " << a.out_dir << "\n";
    return 0;
}

}  // namespace

HeaderEntries training_extras(const TrainResult& result, const TrainConfig& cfg) {
    HeaderEntries extras;
    extras["eta"] = join_doubles(result.offsets.eta);
    extras["schedule"] = encode_schedule(result.schedule);
    std::istringstream lines(format_train_config(cfg));
    std::string line;
    while (std::getline(lines, line)) {
        const auto eq = line.find(" = ");
        extras[kTrainPrefix + line.substr(0, eq)] = line.substr(eq + 3);
    }
    return extras;
}

TrainedArtifacts read_trained_model(const std::filesystem::path& path) {
    ModelFile file = decode_ddm(read_file(path));
    auto take = [&](const std::string& key) {
        const auto it = file.extras.find(key);
        if (it == file.extras.end()) {
            throw FormatError(path.string() + ": ddm header is missing '" + key + "' (not written by train?)");
        }
        return it->second;
    };
    NormalizedDualOffsets offsets;
    for (const std::string& v : split(take("eta"), ',')) {
        offsets.eta.push_back(parse_entry<double>("eta", v));
    }
    if (offsets.eta.size() != file.model.path_steps()) {
        throw FormatError(path.string() + ": 'eta' has " + std::to_string(offsets.eta.size()) +
                          " entries for a model with " + std::to_string(file.model.path_steps()) + " steps");
    }
    DiffusionSchedule schedule = decode_schedule(take("schedule"), file.model.config().cols);
    TrainConfig cfg;
    for (const auto& [key, value] : file.extras) {
        if (key.rfind(kTrainPrefix, 0) == 0) {
            try {
                set_config_value(cfg, key.substr(std::char_traits<char>::length(kTrainPrefix)), value);
            } catch (const ArgumentError& e) {
                throw FormatError(path.string() + ": " + e.what());
            }
        }
    }
    return TrainedArtifacts{std::move(file.model), std::move(offsets), std::move(schedule), std::move(cfg)};
}

std::string encode_pgm(std::span<const double> image, std::size_t rows, std::size_t cols) {
    if (image.size() != rows * cols) {
        throw ShapeError("pgm image has " + std::to_string(image.size()) + " pixels, expected " +
                         std::to_string(rows * cols));
    }
    std::string out = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
    for (double v : image) {
        const double level = std::round(255.0 * std::clamp(v, 0.0, 1.0));
        out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
    }
    return out;
}

std::string render_profile_svg(const std::vector<ProfileRow>& rows, const std::vector<std::size_t>& cut_ranks) {
    constexpr double W = 640, H = 360, pad = 40;
    double lo = 0.0, hi = 1.0;
    if (!rows.empty()) {
        const auto [mn, mx] = std::minmax_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            return a.dual_value < b.dual_value;
        });
        lo = mn->dual_value;
        hi = mx->dual_value;
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
    const double span_x = std::max<double>(1.0, static_cast<double>(rows.size()) - 1.0);
    auto px = [&](double rank) { return pad + (W - 2 * pad) * rank / span_x; };
    auto py = [&](double v) { return H - pad - (H - 2 * pad) * (v - lo) / (hi - lo); };

    std::string svg;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  W, H, W, H);
    svg += buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  pad, H - pad, W - pad, H - pad, pad, pad, pad, H - pad);
    svg += buf;
    for (std::size_t c : cut_ranks) {
        // A cut at rank j sits between sorted samples j-1 and j.
        const double x = px(static_cast<double>(c) - 0.5);
        std::snprintf(buf, sizeof buf,
                      "<line class=\"cut\" x1=\"%.2f\" y1=\"%.1f\" x2=\"%.2f\" y2=\"%.1f\" stroke=\"red\" "
                      "stroke-dasharray=\"4 3\"/>\n",
                      x, pad, x, H - pad);
        svg += buf;
    }
    for (const ProfileRow& r : rows) {
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"steelblue\"/>\n",
                      px(static_cast<double>(r.rank)), py(r.dual_value));
        svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">rank</text>\n"
                  "<text x=\"12\" y=\"%.1f\" font-size=\"12\" transform=\"rotate(-90 12 %.1f)\" "
                  "text-anchor=\"middle\">dual value</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"end\">%.4g</text>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"end\">%.4g</text>\n",
                  W / 2, H - 10, H / 2, H / 2, pad - 4, H - pad, lo, pad - 4, pad + 4, hi);
    svg += buf;
    svg += "</svg>\n";
    return svg;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dual-space characterization and generation of image datasets", "ddgen"};
    app.require_subcommand(1, 1);

    IngestArgs ia;
    auto* ingest = app.add_subcommand("ingest", "Window a CSV time series into a .dds image set");
    ingest->add_option("--input", ia.input, "CSV file, one row per timestep")->required();
    ingest->add_option("--window", ia.window, "Window length (image columns)")->required();
    ingest->add_option("--stride", ia.stride, "Step between window starts")->required();
    ingest->add_option("--norm", ia.norm, "Normalization")->check(CLI::IsMember({"global", "per-image"}));
    ingest->add_option("--out", ia.out, "Output .dds")->required();

    TrainArgs ta;
    auto* trainc = app.add_subcommand("train", "Train a dual function model");
    trainc->add_option("--data", ta.data, "Input .dds")->required();
    trainc->add_option("--config", ta.config, "key = value config file")->required();
    trainc->add_option("--out", ta.out, "Output .ddm")->required();
    trainc->add_option("--trace", ta.trace, "Training trace CSV");
    trainc->add_option("--seed", ta.seed, "Overrides the config seed");
    trainc->add_option("--iters", ta.iters, "Overrides the config iteration count");
    trainc->add_option("--set", ta.overrides, "Extra key=value override, repeatable");

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Fill dual-space gaps by gradient walks");
    gen->add_option("--model", ga.model, "Trained .ddm")->required();
    gen->add_option("--data", ga.data, "Real .dds")->required();
    gen->add_option("--count", ga.count, "Samples to keep")->required();
    gen->add_option("--seed", ga.seed, "Walk seed")->required();
    gen->add_option("--out", ga.out, "Output .dds")->required();
    gen->add_option("--profile", ga.profile, "Also write the real set's dual profile CSV");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Compute the metrics report");
    eval->add_option("--model", ea.model, "Trained .ddm")->required();
    eval->add_option("--real", ea.real, "Real .dds")->required();
    eval->add_option("--gen", ea.gen, "Generated .dds")->required();
    eval->add_option("--out", ea.out, "Output metrics CSV")->required();
    eval->add_option("--seed", ea.seed, "Seed for the stochastic metrics");
    eval->add_option("--walk-failures", ea.walk_failures, "Walk failures reported by generate");

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Write PGM heatmaps and an SVG profile plot");
    report->add_option("--real", ra.real, "Real .dds")->required();
    report->add_option("--gen", ra.gen, "Generated .dds")->required();
    report->add_option("--profile", ra.profile, "Profile CSV from generate --profile")->required();
    report->add_option("--out-dir", ra.out_dir, "Output directory")->required();
    report->add_option("--max-images", ra.max_images, "Heatmaps per set");
    report->add_option("--cut-count", ra.cut_count, "Cut points to mark");

    std::vector<const char*> argv{"ddgen"};
    for (const std::string& s : args) {
        argv.push_back(s.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        configure_threads();
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (*ingest) {
            return do_ingest(ia, out, err);
        }
        if (*trainc) {
            return do_train(ta, out);
        }
        if (*gen) {
            return do_generate(ga, out);
        }
        if (*eval) {
            return do_eval(ea, out);
        }
        return do_report(ra, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace ddgen::cli
