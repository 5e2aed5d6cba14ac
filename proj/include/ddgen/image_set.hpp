#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ddgen {

enum class SetTag { real, marginal, intermediate, generated };

/// An ordered collection of single-channel images, row-major, pixels in [0,1].
///
/// Pixels are held as 64-bit floats in memory; only the on-disk `.dds`
/// format narrows them to 32 bits.
class ImageSet {
public:
    ImageSet() = default;
    ImageSet(std::size_t count, std::size_t rows, std::size_t cols, SetTag tag = SetTag::real);
    ImageSet(std::size_t rows, std::size_t cols, std::vector<double> pixels, SetTag tag = SetTag::real);

    [[nodiscard]] std::size_t count() const noexcept { return count_; }
    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t pixels_per_image() const noexcept { return rows_ * cols_; }
    [[nodiscard]] bool empty() const noexcept { return count_ == 0; }

    [[nodiscard]] SetTag tag() const noexcept { return tag_; }
    /// Path step index for `SetTag::intermediate` sets, 0 otherwise.
    [[nodiscard]] std::size_t step() const noexcept { return step_; }
    void set_tag(SetTag tag, std::size_t step = 0) noexcept {
        tag_ = tag;
        step_ = step;
    }

    [[nodiscard]] std::span<const double> image(std::size_t i) const;
    [[nodiscard]] std::span<double> image(std::size_t i);
    [[nodiscard]] double at(std::size_t i, std::size_t r, std::size_t c) const {
        return pixels_[i * rows_ * cols_ + r * cols_ + c];
    }
    double& at(std::size_t i, std::size_t r, std::size_t c) { return pixels_[i * rows_ * cols_ + r * cols_ + c]; }

    [[nodiscard]] const std::vector<double>& pixels() const noexcept { return pixels_; }
    [[nodiscard]] std::vector<double>& pixels() noexcept { return pixels_; }

    void append(std::span<const double> image);
    [[nodiscard]] ImageSet subset(std::span<const std::size_t> indices) const;
    [[nodiscard]] bool same_shape(const ImageSet& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    /// Throws InputError naming the first pixel that is non-finite or outside [0,1].
    void validate() const;

    friend bool operator==(const ImageSet&, const ImageSet&) = default;

private:
    std::size_t count_ = 0;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> pixels_;
    SetTag tag_ = SetTag::real;
    std::size_t step_ = 0;
};

}  // namespace ddgen
