#include "ddgen/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>

#include "ddgen/divergence.hpp"
#include "ddgen/error.hpp"
#include "ddgen/model_io.hpp"

namespace ddgen {

DualProfile build_profile(std::span<const double> dual_values, std::size_t knn_k) {
    const std::size_t n = dual_values.size();
    if (knn_k < 2) {
        throw ArgumentError("knn_k must be at least 2, got " + std::to_string(knn_k));
    }
    if (n < 2 * knn_k) {
        throw ArgumentError("profile needs n >= 2*knn_k (n=" + std::to_string(n) + ", knn_k=" +
                            std::to_string(knn_k) + ")");
    }
    for (double v : dual_values) {
        if (!std::isfinite(v)) {
            throw ArgumentError("dual values must be finite");
        }
    }
    DualProfile p;
    p.knn_k = knn_k;
    p.sort_permutation.resize(n);
    std::iota(p.sort_permutation.begin(), p.sort_permutation.end(), std::size_t{0});
    std::ranges::stable_sort(p.sort_permutation,
                             [&](std::size_t a, std::size_t b) { return dual_values[a] < dual_values[b]; });
    p.sorted_values.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        p.sorted_values[r] = dual_values[p.sort_permutation[r]];
    }

    const std::size_t cuts = n - 2 * knn_k + 1;
    p.d_knn.resize(cuts);
    const std::span<const double> sorted(p.sorted_values);
    const auto count = static_cast<std::int64_t>(cuts);
#pragma omp parallel for schedule(static) if (cuts * knn_k > 4096)
    for (std::int64_t c = 0; c < count; ++c) {
        const std::size_t j = static_cast<std::size_t>(c) + knn_k;
        p.d_knn[c] = dv_estimate(sorted.subspan(j, knn_k), sorted.subspan(j - knn_k, knn_k));
    }
    return p;
}

double clustering_loss(std::span<const double> d_knn, ClusterReduction reduction) {
    if (d_knn.empty()) {
        throw ArgumentError("clustering_loss needs at least one local divergence");
    }
    double sum = 0.0;
    for (double d : d_knn) {
        sum += d;
    }
    if (reduction == ClusterReduction::mean) {
        sum /= static_cast<double>(d_knn.size());
    }
    return sum - logsumexp(d_knn);
}

std::vector<double> clustering_loss_gradient(const DualProfile& profile, ClusterReduction reduction) {
    const std::size_t n = profile.sorted_values.size();
    const std::size_t k = profile.knn_k;
    const std::vector<double> weights = softmax(profile.d_knn);
    const double intra =
        reduction == ClusterReduction::mean ? 1.0 / static_cast<double>(profile.d_knn.size()) : 1.0;
    const std::span<const double> sorted(profile.sorted_values);
    std::vector<double> by_rank(n, 0.0);
    for (std::size_t c = 0; c < profile.d_knn.size(); ++c) {
        const double dl_dd = intra - weights[c];
        const std::size_t j = profile.cut_rank(c);
        const DvGradient g = dv_estimate_with_gradient(sorted.subspan(j, k), sorted.subspan(j - k, k));
        for (std::size_t t = 0; t < k; ++t) {
            by_rank[j + t] += dl_dd * g.d_num[t];
            by_rank[j - k + t] += dl_dd * g.d_den[t];
        }
    }
    std::vector<double> grad(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        grad[profile.sort_permutation[r]] = by_rank[r];
    }
    return grad;
}

CutPointSet select_cut_points(const DualProfile& profile, std::size_t c) {
    if (c < 1) {
        throw ArgumentError("cut count must be at least 1");
    }
    if (c > profile.d_knn.size()) {
        throw ArgumentError("requested " + std::to_string(c) + " cut points but the profile has only " +
                            std::to_string(profile.d_knn.size()));
    }
    std::vector<std::size_t> order(profile.d_knn.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return profile.d_knn[a] > profile.d_knn[b]; });
    CutPointSet cuts;
    for (std::size_t t = 0; t < c; ++t) {
        cuts.indices.push_back(profile.cut_rank(order[t]));
    }
    std::ranges::sort(cuts.indices);
    return cuts;
}

double softmax_divergence_statistic(std::span<const double> d_knn) {
    return logmeanexp(d_knn);
}

void write_profile_csv(const std::filesystem::path& path, const DualProfile& profile) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << "rank,dual_value,original_index,d_knn\n";
    const std::size_t n = profile.sorted_values.size();
    for (std::size_t r = 0; r < n; ++r) {
        out << r << ',' << format_exact(profile.sorted_values[r]) << ',' << profile.sort_permutation[r] << ',';
        if (r >= profile.knn_k && r - profile.knn_k < profile.d_knn.size()) {
            out << format_exact(profile.d_knn[r - profile.knn_k]);
        }
        out << '\n';
    }
}

std::vector<ProfileRow> read_profile_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line != "rank,dual_value,original_index,d_knn") {
        throw FormatError(path.string() + ": line 1: expected header rank,dual_value,original_index,d_knn");
    }
    std::vector<ProfileRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (!line.empty() && line.back() == ',') {
            cells.emplace_back();
        }
        if (cells.size() != 4) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected 4 cells, found " +
                              std::to_string(cells.size()));
        }
        try {
            ProfileRow row{};
            row.rank = std::stoull(cells[0]);
            row.dual_value = std::stod(cells[1]);
            row.original_index = std::stoull(cells[2]);
            row.has_d_knn = !cells[3].empty();
            row.d_knn = row.has_d_knn ? std::stod(cells[3]) : 0.0;
            rows.push_back(row);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": non-numeric cell");
        }
    }
    return rows;
}

}  // namespace ddgen
