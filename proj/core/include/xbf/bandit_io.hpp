#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "xbf/logging_sim.hpp"

namespace xbf {

/// Bandit log, JSON lines:
///   {"id": int, "slate": [int], "cond_prop": [real], "marg_prop": [real], "reward": [0|1]}
/// Reals are written with 17 significant digits.
void write_bandit_log(std::span<const BanditRecord> log, std::ostream& out);
void write_bandit_log(std::span<const BanditRecord> log, const std::filesystem::path& path);
std::vector<BanditRecord> read_bandit_log(std::istream& in);
std::vector<BanditRecord> read_bandit_log(const std::filesystem::path& path);

/// Logging table, JSON lines: {"id": int, "actions": [int], "probs": [real]}.
/// An optional "padded": true marks instances whose support was completed.
void write_logging_table(const LoggingTable& table, std::ostream& out);
void write_logging_table(const LoggingTable& table, const std::filesystem::path& path);
LoggingTable read_logging_table(std::istream& in, std::size_t num_labels);
LoggingTable read_logging_table(const std::filesystem::path& path, std::size_t num_labels);

std::string logging_stats_json(const LoggingStats& stats);

/// Formats a double with 17 significant digits.
std::string format_real(double v);

}  // namespace xbf
