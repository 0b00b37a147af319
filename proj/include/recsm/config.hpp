#pragma once

#include <string>

#include "recsm/dataio.hpp"
#include "recsm/training.hpp"

namespace recsm {

// JSON (de)serialization for the user-facing configs. Parsers accept
// partial objects: absent keys keep their defaults, unknown keys are a
// ConfigError.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json_text);

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& json_text);

std::string scene_config_to_json(const SyntheticSceneConfig& cfg);
SyntheticSceneConfig scene_config_from_json(const std::string& json_text);

// Keys whose values differ between the two serialized configs.
std::vector<std::string> config_diff_keys(const std::string& json_a, const std::string& json_b);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace recsm
