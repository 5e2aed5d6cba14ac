#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "ddgen/model.hpp"

namespace ddgen {

/// Extra `key=value` header entries stored alongside the model configuration
/// (dual offsets, clustering and walk settings used at generation time).
using HeaderEntries = std::map<std::string, std::string>;

struct ModelFile {
    DualFunctionModel model;
    HeaderEntries extras;
};

/// `.ddm` layout: "DDM1", u32 LE header length, UTF-8 `key=value` lines, then
/// every parameter followed by every EMA parameter as f64 LE, layer order.
std::string encode_ddm(const DualFunctionModel& model, const HeaderEntries& extras = {});
ModelFile decode_ddm(const std::string& bytes);

void write_ddm(const std::filesystem::path& path, const DualFunctionModel& model, const HeaderEntries& extras = {});
ModelFile read_ddm(const std::filesystem::path& path);

/// Shortest text that parses back to the identical double.
std::string format_exact(double value);

}  // namespace ddgen
