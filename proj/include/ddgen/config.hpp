#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ddgen/trainer.hpp"

namespace ddgen {

/// Sets one TrainConfig field by name. Walk fields use a `walk.` prefix
/// (`walk.step_size`). Throws ArgumentError on an unknown key or bad value.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Every recognized key, in the order format_train_config writes them.
const std::vector<std::string>& config_keys();

/// Applies `key = value` lines on top of `base`. Blank lines and `#` comments
/// are skipped. Errors name the source and line.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {}, const std::string& source = "<config>");
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

/// One `key = value` line per field; parses back to an identical config.
std::string format_train_config(const TrainConfig& cfg);

}  // namespace ddgen
