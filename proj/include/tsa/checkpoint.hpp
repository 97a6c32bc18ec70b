#pragma once

#include <filesystem>
#include <string>

#include "tsa/model.hpp"

namespace tsa {

inline constexpr const char* kCheckpointFormat = "aamtsa-checkpoint-v1";

// Single JSON document: format tag, the full ModelConfig, and every parameter
// as name -> {shape, row-major values}. Doubles round-trip exactly.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace tsa
