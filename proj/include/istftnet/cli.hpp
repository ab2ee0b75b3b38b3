#pragma once

#include <iosfwd>

namespace istftnet::cli {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kFormatError = 2,
  kNumericError = 3,
};

/// Entry point of the `istftnet` tool (mel, synth, roundtrip, params, bench,
/// init-weights). Results go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace istftnet::cli
