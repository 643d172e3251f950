#include "report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <memory>

#include <openssl/evp.h>

#include "cdhmm/errors.hpp"
#include "cdhmm/model_io.hpp"

namespace cdhmm::cli {

std::string sha256_hex(const std::string& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(io::read_file(path)); }

CsvWriter::CsvWriter(std::string schema, std::vector<std::string> header) : columns_(header.size()) {
  text_ = "#schema=" + schema + "\n";
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) throw Error("csv row has the wrong number of fields");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) text_ += ',';
    const auto& f = fields[i];
    if (f.find_first_of(",\"\n") == std::string::npos) {
      text_ += f;
      continue;
    }
    text_ += '"';
    for (char c : f) {
      if (c == '"') text_ += '"';
      text_ += c;
    }
    text_ += '"';
  }
  text_ += '\n';
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

Manifest::Manifest(std::string command, std::filesystem::path out_dir)
    : command_(std::move(command)), out_dir_(std::move(out_dir)) {
  std::filesystem::create_directories(out_dir_);
}

void Manifest::add_input(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  nlohmann::ordered_json e;
  e["path"] = path.generic_string();
  e["bytes"] = bytes.size();
  e["sha256"] = sha256_hex(bytes);
  inputs_.push_back(std::move(e));
}

void Manifest::write_output(const std::string& relative, const std::string& text) {
  const auto path = out_dir_ / relative;
  std::filesystem::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
  nlohmann::ordered_json e;
  e["path"] = relative;
  e["bytes"] = text.size();
  e["sha256"] = sha256_hex(text);
  outputs_.push_back(std::move(e));
}

void Manifest::finish(const nlohmann::ordered_json& config) {
  nlohmann::ordered_json m;
  m["schema"] = kManifestSchema;
  m["command"] = command_;
  m["config"] = config;
  m["inputs"] = inputs_;
  m["outputs"] = outputs_;
  io::write_file_atomic(out_dir_ / "manifest.json", m.dump(2) + "\n");
}

}  // namespace cdhmm::cli
