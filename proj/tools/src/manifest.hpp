#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace xbf::cli {

/// 64-bit FNV-1a of a file's bytes.
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;  ///< resolved option values
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;  ///< input path -> hex digest
  std::string tool_version;

  [[nodiscard]] std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

/// Creates `dir`. Throws ConfigError if it exists and is nonempty unless `force`.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace xbf::cli
