#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slk::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kDataError = 2, kNonConvergence = 3 };

/// Runs one invocation. `args` excludes the program name. Normal output goes to
/// `out`, diagnostics and usage text to `err`.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace slk::cli
