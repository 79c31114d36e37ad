#pragma once

// Line-based run configuration: `key = value`, `#` comments. Keys mirror
// the ModelConfig and TrainConfig fields; unknown keys are rejected.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xssm/net.hpp"
#include "xssm/train.hpp"

namespace xssm::config {

using KeyValues = std::map<std::string, std::string>;

struct RunConfig {
  ModelConfig model;
  train::TrainConfig train;
};

// Throws std::invalid_argument naming origin:line.
KeyValues parse_key_values(const std::string& text, const std::string& origin);

std::vector<std::pair<std::string, double>> model_fields(const ModelConfig& config);
// Missing keys keep their defaults; unknown keys throw.
ModelConfig model_from_fields(const KeyValues& fields, const std::string& origin);

RunConfig parse_config(const std::string& text, const std::string& origin);
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& config);

}  // namespace xssm::config
