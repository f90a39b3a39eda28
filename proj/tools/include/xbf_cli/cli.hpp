#pragma once

#include <iosfwd>

namespace xbf::cli {

/// Exit codes of the xbf tool.
enum ExitCode : int {
  kOk = 0,
  kParseError = 2,
  kConfigError = 3,
  kRuntimeError = 4,
  kDiverged = 5,
  kTheoremViolation = 6,
};

/// Runs the tool. Normal output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xbf::cli
