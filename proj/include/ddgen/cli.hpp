#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ddgen/model_io.hpp"
#include "ddgen/trainer.hpp"

namespace ddgen::cli {

/// Exit status: 0 success, 1 module error, 2 usage error.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `.ddm` extras written by `train`: the dual offsets, the schedule and
/// every TrainConfig field under a `train.` prefix.
HeaderEntries training_extras(const TrainResult& result, const TrainConfig& cfg);

struct TrainedArtifacts {
    DualFunctionModel model;
    NormalizedDualOffsets offsets;
    DiffusionSchedule schedule;
    TrainConfig config;
};

/// Inverse of training_extras. Throws FormatError on missing or malformed entries.
TrainedArtifacts read_trained_model(const std::filesystem::path& path);

/// Binary PGM: "P5\n<cols> <rows>\n255\n" then round(255 * value) per pixel.
std::string encode_pgm(std::span<const double> image, std::size_t rows, std::size_t cols);

/// Scatter of dual value against rank with a vertical line at every cut rank.
std::string render_profile_svg(const std::vector<ProfileRow>& rows, const std::vector<std::size_t>& cut_ranks);

}  // namespace ddgen::cli
