#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ddgen/image_set.hpp"

namespace ddgen {

/// Ordered column blocks; step j of the path marginalizes block j.
struct DiffusionSchedule {
    std::size_t cols = 0;
    std::vector<std::vector<std::size_t>> blocks;

    [[nodiscard]] std::size_t steps() const noexcept { return blocks.size(); }
    /// Throws ArgumentError unless the blocks partition [0, cols).
    void validate() const;
    friend bool operator==(const DiffusionSchedule&, const DiffusionSchedule&) = default;
};

/// Draws a sample from the product of per-pixel empirical marginals: every
/// pixel position is resampled with replacement independently of all others.
ImageSet sample_marginals(const ImageSet& data, std::uint64_t seed);

/// Contiguous left-to-right blocks of width ceil(cols/k).
DiffusionSchedule default_schedule(std::size_t cols, std::size_t k);

/// [Z^0 = X, ..., Z^k = Z], Z^j having the columns of blocks 0..j-1 taken from Z.
std::vector<ImageSet> build_path(const ImageSet& data, const ImageSet& marginal, const DiffusionSchedule& schedule);

}  // namespace ddgen
