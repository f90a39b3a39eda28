#include "xbf/bandit_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

namespace xbf {

std::string format_real(double v) { return fmt::format("{:.17g}", v); }

namespace {

template <typename Range, typename Fn>
void write_array(std::ostream& out, const Range& values, Fn&& fmt_one) {
  out << '[';
  bool first = true;
  for (const auto& v : values) {
    if (!first) out << ", ";
    first = false;
    out << fmt_one(v);
  }
  out << ']';
}

std::string format_reward(double r) {
  if (r == 0.0) return "0";
  if (r == 1.0) return "1";
  return format_real(r);
}

nlohmann::json parse_line(const std::string& line, std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(fmt::format("line {}: invalid JSON ({})", line_no, e.what()), line_no);
  }
}

template <typename T>
std::vector<T> get_array(const nlohmann::json& j, const char* key, std::size_t line_no) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ParseError(fmt::format("line {}: missing array '{}'", line_no, key), line_no);
  }
  try {
    return j.at(key).get<std::vector<T>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("line {}: bad '{}' ({})", line_no, key, e.what()), line_no);
  }
}

std::size_t get_id(const nlohmann::json& j, std::size_t line_no) {
  if (!j.contains("id") || !j.at("id").is_number_unsigned()) {
    throw ParseError(fmt::format("line {}: missing non-negative integer 'id'", line_no), line_no);
  }
  return j.at("id").get<std::size_t>();
}

}  // namespace

void write_bandit_log(std::span<const BanditRecord> log, std::ostream& out) {
  for (const auto& rec : log) {
    out << "{\"id\": " << rec.instance_id << ", \"slate\": ";
    write_array(out, rec.slate, [](LabelId y) { return std::to_string(y); });
    out << ", \"cond_prop\": ";
    write_array(out, rec.cond_propensities, format_real);
    out << ", \"marg_prop\": ";
    write_array(out, rec.marg_propensities, format_real);
    out << ", \"reward\": ";
    write_array(out, rec.rewards, format_reward);
    out << "}\n";
  }
}

void write_bandit_log(std::span<const BanditRecord> log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  write_bandit_log(log, out);
}

std::vector<BanditRecord> read_bandit_log(std::istream& in) {
  std::vector<BanditRecord> log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = parse_line(line, line_no);
    BanditRecord rec;
    rec.instance_id = get_id(j, line_no);
    rec.slate = get_array<LabelId>(j, "slate", line_no);
    rec.cond_propensities = get_array<double>(j, "cond_prop", line_no);
    rec.marg_propensities = get_array<double>(j, "marg_prop", line_no);
    rec.rewards = get_array<double>(j, "reward", line_no);
    const std::size_t ell = rec.slate.size();
    if (ell == 0 || rec.cond_propensities.size() != ell || rec.marg_propensities.size() != ell ||
        rec.rewards.size() != ell) {
      throw ParseError(fmt::format("line {}: slate/propensity/reward lengths differ", line_no), line_no);
    }
    for (std::size_t k = 0; k < ell; ++k) {
      if (!(rec.cond_propensities[k] > 0.0 && rec.cond_propensities[k] <= 1.0) ||
          !(rec.marg_propensities[k] > 0.0 && rec.marg_propensities[k] <= 1.0)) {
        throw ParseError(fmt::format("line {}: propensity outside (0, 1]", line_no), line_no);
      }
    }
    log.push_back(std::move(rec));
  }
  return log;
}

std::vector<BanditRecord> read_bandit_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open bandit log '{}'", path.string()));
  return read_bandit_log(in);
}

void write_logging_table(const LoggingTable& table, std::ostream& out) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table.row(i);
    out << "{\"id\": " << i << ", \"actions\": ";
    write_array(out, row.actions, [](LabelId y) { return std::to_string(y); });
    out << ", \"probs\": ";
    write_array(out, row.probs, format_real);
    if (row.padded) out << ", \"padded\": true";
    out << "}\n";
  }
}

void write_logging_table(const LoggingTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  write_logging_table(table, out);
}

LoggingTable read_logging_table(std::istream& in, std::size_t num_labels) {
  std::vector<LoggingRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = parse_line(line, line_no);
    const std::size_t id = get_id(j, line_no);
    if (id != rows.size()) {
      throw ParseError(fmt::format("line {}: expected id {}, found {}", line_no, rows.size(), id), line_no);
    }
    LoggingRow row;
    row.actions = get_array<LabelId>(j, "actions", line_no);
    row.probs = get_array<double>(j, "probs", line_no);
    row.padded = j.value("padded", false);
    rows.push_back(std::move(row));
  }
  try {
    return LoggingTable(std::move(rows), num_labels);
  } catch (const ConfigError& e) {
    throw ParseError(fmt::format("invalid logging table: {}", e.what()), 0);
  }
}

LoggingTable read_logging_table(const std::filesystem::path& path, std::size_t num_labels) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open logging table '{}'", path.string()));
  return read_logging_table(in, num_labels);
}

std::string logging_stats_json(const LoggingStats& stats) {
  nlohmann::ordered_json j;
  j["ell"] = stats.ell;
  j["expected_reward_at_ell"] = stats.expected_reward_at_ell;
  j["labelled_instances"] = stats.labelled_instances;
  j["coverage"] = stats.coverage;
  j["padded_instances"] = stats.padded_instances;
  return j.dump(2);
}

}  // namespace xbf
