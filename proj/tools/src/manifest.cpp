#include "manifest.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "xbf/types.hpp"

namespace xbf::cli {

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    const auto got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  nlohmann::ordered_json c = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) c[k] = v;
  j["config"] = c;
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& [k, v] : inputs) in[k] = v;
  j["inputs"] = in;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(fmt::format("manifest: {}", e.what()), 0);
  }
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.value("tool_version", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    if (j.contains("inputs")) m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("manifest: {}", e.what()));
  }
  return m;
}

void prepare_output_dir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (dir.empty()) throw ConfigError("an output directory (--out) is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(fmt::format("{} exists and is not a directory", dir.string()));
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError(fmt::format("output directory {} is not empty (use --force)", dir.string()));
    }
  }
  fs::create_directories(dir);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("write to {} failed", path.string()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace xbf::cli
