#include "ddgen/diffusion_path.hpp"

#include <random>
#include <string>

#include "ddgen/error.hpp"

namespace ddgen {

void DiffusionSchedule::validate() const {
    if (blocks.empty()) {
        throw ArgumentError("schedule needs at least one block");
    }
    std::vector<bool> seen(cols, false);
    std::size_t covered = 0;
    for (const auto& block : blocks) {
        if (block.empty()) {
            throw ArgumentError("schedule contains an empty block");
        }
        for (std::size_t c : block) {
            if (c >= cols) {
                throw ArgumentError("schedule column " + std::to_string(c) + " outside [0, " + std::to_string(cols) +
                                    ")");
            }
            if (seen[c]) {
                throw ArgumentError("schedule column " + std::to_string(c) + " appears in two blocks");
            }
            seen[c] = true;
            ++covered;
        }
    }
    if (covered != cols) {
        throw ArgumentError("schedule blocks cover " + std::to_string(covered) + " of " + std::to_string(cols) +
                            " columns");
    }
}

ImageSet sample_marginals(const ImageSet& data, std::uint64_t seed) {
    const std::size_t n = data.count();
    if (n < 2) {
        throw ArgumentError("sample_marginals needs at least 2 images, got " + std::to_string(n));
    }
    const std::size_t ppi = data.pixels_per_image();
    ImageSet out(n, data.rows(), data.cols(), SetTag::marginal);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const auto& src = data.pixels();
    auto& dst = out.pixels();
    for (std::size_t p = 0; p < ppi; ++p) {
        for (std::size_t i = 0; i < n; ++i) {
            dst[i * ppi + p] = src[pick(rng) * ppi + p];
        }
    }
    return out;
}

DiffusionSchedule default_schedule(std::size_t cols, std::size_t k) {
    if (k < 1 || k > cols) {
        throw ArgumentError("schedule needs 1 <= k <= cols, got k=" + std::to_string(k) +
                            ", cols=" + std::to_string(cols));
    }
    const std::size_t width = (cols + k - 1) / k;
    DiffusionSchedule schedule{cols, {}};
    for (std::size_t start = 0; start < cols; start += width) {
        std::vector<std::size_t> block;
        for (std::size_t c = start; c < std::min(cols, start + width); ++c) {
            block.push_back(c);
        }
        schedule.blocks.push_back(std::move(block));
    }
    // ceil widths can exhaust the columns early (e.g. cols=5, k=4 -> 2,2,1);
    // split the widest trailing blocks so exactly k steps remain.
    while (schedule.blocks.size() < k) {
        std::size_t widest = 0;
        for (std::size_t b = 0; b < schedule.blocks.size(); ++b) {
            if (schedule.blocks[b].size() > schedule.blocks[widest].size()) {
                widest = b;
            }
        }
        auto& block = schedule.blocks[widest];
        std::vector<std::size_t> tail(block.begin() + static_cast<std::ptrdiff_t>(block.size() / 2), block.end());
        block.resize(block.size() / 2);
        schedule.blocks.insert(schedule.blocks.begin() + static_cast<std::ptrdiff_t>(widest) + 1, std::move(tail));
    }
    return schedule;
}

std::vector<ImageSet> build_path(const ImageSet& data, const ImageSet& marginal, const DiffusionSchedule& schedule) {
    if (!data.same_shape(marginal) || data.count() != marginal.count()) {
        throw ArgumentError("build_path: data and marginal sample sets differ in shape or count");
    }
    if (schedule.cols != data.cols()) {
        throw ArgumentError("build_path: schedule is for " + std::to_string(schedule.cols) + " columns, images have " +
                            std::to_string(data.cols()));
    }
    schedule.validate();
    std::vector<ImageSet> path;
    path.reserve(schedule.steps() + 1);
    path.push_back(data);
    for (std::size_t j = 0; j < schedule.steps(); ++j) {
        ImageSet next = path.back();
        next.set_tag(SetTag::intermediate, j + 1);
        for (std::size_t i = 0; i < data.count(); ++i) {
            for (std::size_t r = 0; r < data.rows(); ++r) {
                for (std::size_t c : schedule.blocks[j]) {
                    next.at(i, r, c) = marginal.at(i, r, c);
                }
            }
        }
        path.push_back(std::move(next));
    }
    path.back().set_tag(SetTag::marginal);
    return path;
}

}  // namespace ddgen
