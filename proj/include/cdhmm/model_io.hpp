#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cdhmm/model.hpp"
#include "cdhmm/training.hpp"

namespace cdhmm::io {

inline constexpr const char* kModelVersion = "cdhmm-model/1";

struct ModelFile {
  hmm::CdhmmParams params;
  std::optional<train::EmConfig> config;
  std::vector<double> ll_trace;
};

nlohmann::ordered_json em_config_to_json(const train::EmConfig& config);
/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
train::EmConfig em_config_from_json(const nlohmann::json& j, train::EmConfig base = {});

nlohmann::ordered_json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::json& j);

std::string serialize_model(const ModelFile& model);
/// Throws ValidationError for malformed text, a wrong version or a missing field.
ModelFile parse_model(const std::string& text);

/// Writes through a temporary file and renames, so readers never see a partial model.
void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

/// Writes `text` to `path` via a temporary file in the same directory.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace cdhmm::io
