#include "ddgen/image_set.hpp"

#include <cmath>
#include <string>

#include "ddgen/error.hpp"

namespace ddgen {

ImageSet::ImageSet(std::size_t count, std::size_t rows, std::size_t cols, SetTag tag)
    : count_(count), rows_(rows), cols_(cols), pixels_(count * rows * cols, 0.0), tag_(tag) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("image dimensions must be positive");
    }
}

ImageSet::ImageSet(std::size_t rows, std::size_t cols, std::vector<double> pixels, SetTag tag)
    : rows_(rows), cols_(cols), pixels_(std::move(pixels)), tag_(tag) {
    if (rows == 0 || cols == 0) {
        throw ShapeError("image dimensions must be positive");
    }
    if (pixels_.size() % (rows * cols) != 0) {
        throw ShapeError("pixel buffer of size " + std::to_string(pixels_.size()) +
                         " is not a multiple of " + std::to_string(rows * cols));
    }
    count_ = pixels_.size() / (rows * cols);
}

std::span<const double> ImageSet::image(std::size_t i) const {
    return std::span<const double>(pixels_).subspan(i * pixels_per_image(), pixels_per_image());
}

std::span<double> ImageSet::image(std::size_t i) {
    return std::span<double>(pixels_).subspan(i * pixels_per_image(), pixels_per_image());
}

void ImageSet::append(std::span<const double> image) {
    if (image.size() != pixels_per_image()) {
        throw ShapeError("appended image has " + std::to_string(image.size()) + " pixels, set expects " +
                         std::to_string(pixels_per_image()));
    }
    pixels_.insert(pixels_.end(), image.begin(), image.end());
    ++count_;
}

ImageSet ImageSet::subset(std::span<const std::size_t> indices) const {
    ImageSet out(0, rows_, cols_, tag_);
    out.step_ = step_;
    out.pixels_.reserve(indices.size() * pixels_per_image());
    for (std::size_t i : indices) {
        if (i >= count_) {
            throw ArgumentError("subset index " + std::to_string(i) + " out of range");
        }
        out.append(image(i));
    }
    return out;
}

void ImageSet::validate() const {
    for (std::size_t k = 0; k < pixels_.size(); ++k) {
        const double v = pixels_[k];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            const std::size_t ppi = pixels_per_image();
            throw InputError("pixel " + std::to_string(k % ppi) + " of image " + std::to_string(k / ppi) +
                             " is outside [0,1]: " + std::to_string(v));
        }
    }
}

}  // namespace ddgen
