#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace iontrap::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kPhysicsError = 3,
  kNonConvergence = 4,
};

/// Runs the command line `args` (args[0] is the program name). Summaries go
/// to `out`, diagnostics to `err`; artifacts are written under --out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a of `text`, as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace iontrap::cli
