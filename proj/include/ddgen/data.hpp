#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddgen/image_set.hpp"

namespace ddgen {

/// T x C matrix of a multivariate series; row t is one timestep.
struct SeriesMatrix {
    std::size_t timesteps = 0;
    std::size_t channels = 0;
    std::vector<double> values;
    std::vector<std::string> column_names;

    [[nodiscard]] double at(std::size_t t, std::size_t c) const { return values[t * channels + c]; }
};

enum class Normalization { global_minmax, per_image_minmax };

struct WindowSpec {
    std::size_t window = 1;
    std::size_t stride = 1;
    Normalization normalization = Normalization::global_minmax;
};

struct WindowResult {
    ImageSet images;
    /// Set when a zero value range forced every pixel of some image to 0.5.
    bool degenerate_range = false;
};

/// Sliding windows as C x window images (channels are rows, time is columns).
WindowResult window_series(const SeriesMatrix& series, const WindowSpec& spec);

SeriesMatrix parse_csv(const std::string& text, const std::string& source = "<csv>");
SeriesMatrix load_csv(const std::filesystem::path& path);

/// `.dds`: "DDS1", u32 LE n, rows, cols, then n*rows*cols f32 LE pixels.
std::string encode_dds(const ImageSet& set);
ImageSet decode_dds(const std::string& bytes);
void write_dds(const ImageSet& set, const std::filesystem::path& path);
ImageSet read_dds(const std::filesystem::path& path);

struct GaussianSynth {
    ImageSet images;
    double analytic_mmi = 0.0;  ///< -(D-1)/2 * ln(1 - rho^2), before clipping
};

/// AR(1)-correlated Gaussian images over the row-major pixel order, clipped
/// to +-3 and mapped affinely to [0,1].
GaussianSynth synth_gaussian_ar1(std::size_t n, std::size_t rows, std::size_t cols, double rho, std::uint64_t seed);

struct ClusterSynth {
    ImageSet images;
    std::vector<int> labels;
};

/// Two clusters of i.i.d.-noise images centered at 0.5 +- separation/2.
ClusterSynth synth_two_clusters(std::size_t n, std::size_t rows, std::size_t cols, double separation,
                                std::uint64_t seed);

/// Images with every pixel independently uniform on [0,1].
ImageSet synth_uniform(std::size_t n, std::size_t rows, std::size_t cols, std::uint64_t seed);

}  // namespace ddgen
