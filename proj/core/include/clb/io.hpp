#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace clb {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes `contents`, creating parent directories. Throws IoError with the path.
void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

/// FNV-1a over the canonical (sorted-key) dump of `j`, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace clb
