#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace ddgen {

/// Sorted dual coordinates of a set with local divergences at interior cut points.
///
/// A cut at rank j separates sorted[j-k .. j) (left neighbors) from
/// sorted[j .. j+k) (right neighbors); interior cuts are j in [k, n-k], so
/// d_knn[j - k] belongs to rank j.
struct DualProfile {
    std::vector<double> sorted_values;
    std::vector<std::size_t> sort_permutation;  ///< sorted rank -> original index
    std::vector<double> d_knn;
    std::size_t knn_k = 0;

    [[nodiscard]] std::size_t first_cut_rank() const noexcept { return knn_k; }
    [[nodiscard]] std::size_t cut_rank(std::size_t d_index) const noexcept { return d_index + knn_k; }
};

struct CutPointSet {
    std::vector<std::size_t> indices;  ///< cut ranks, ascending
    [[nodiscard]] std::size_t count() const noexcept { return indices.size(); }
};

DualProfile build_profile(std::span<const double> dual_values, std::size_t knn_k);

/// How the intra-cluster term of the clustering loss aggregates d_knn.
enum class ClusterReduction { sum, mean };

/// sum(d) - logsumexp(d), or mean(d) - logsumexp(d) with ClusterReduction::mean.
double clustering_loss(std::span<const double> d_knn, ClusterReduction reduction = ClusterReduction::sum);

/// d clustering_loss(profile.d_knn) / d dual_values, indexed by original position.
std::vector<double> clustering_loss_gradient(const DualProfile& profile,
                                             ClusterReduction reduction = ClusterReduction::sum);

/// The c cut ranks with largest d_knn (ties to the smaller rank), returned ascending.
CutPointSet select_cut_points(const DualProfile& profile, std::size_t c);

/// logsumexp(d) - log(len(d)); zero iff every local divergence is zero.
double softmax_divergence_statistic(std::span<const double> d_knn);

/// CSV `rank,dual_value,original_index,d_knn`; d_knn is empty at non-cut ranks.
void write_profile_csv(const std::filesystem::path& path, const DualProfile& profile);

struct ProfileRow {
    std::size_t rank;
    double dual_value;
    std::size_t original_index;
    bool has_d_knn;
    double d_knn;
};
std::vector<ProfileRow> read_profile_csv(const std::filesystem::path& path);

}  // namespace ddgen
