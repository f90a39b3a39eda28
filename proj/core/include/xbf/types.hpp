#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace xbf {

using LabelId = std::uint32_t;
using FeatureId = std::uint32_t;

/// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what), line_(line) {}
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Invalid configuration or precondition on user-supplied parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t where)
      : std::runtime_error(what), where_(where) {}
  /// Epoch or batch index at which the divergence was detected.
  [[nodiscard]] std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

}  // namespace xbf
