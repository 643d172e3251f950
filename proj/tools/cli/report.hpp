#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cdhmm::cli {

inline constexpr const char* kManifestSchema = "cdhmm-manifest/1";

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Comma-separated rows with a leading "#schema=..." line. Fields containing a
/// comma, quote or newline are quoted.
class CsvWriter {
 public:
  CsvWriter(std::string schema, std::vector<std::string> header);

  void row(const std::vector<std::string>& fields);
  std::string str() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

/// Shortest round-trip formatting, "" for NaN.
std::string fmt(double v);

/// Collects input hashes and written outputs of one command run.
class Manifest {
 public:
  Manifest(std::string command, std::filesystem::path out_dir);

  void add_input(const std::filesystem::path& path);
  /// Writes `text` to out_dir / relative atomically and records its hash.
  void write_output(const std::string& relative, const std::string& text);
  /// Writes manifest.json; config should not contain run-specific paths.
  void finish(const nlohmann::ordered_json& config);

  const std::filesystem::path& out_dir() const { return out_dir_; }

 private:
  std::string command_;
  std::filesystem::path out_dir_;
  nlohmann::ordered_json inputs_ = nlohmann::ordered_json::array();
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::array();
};

}  // namespace cdhmm::cli
