#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nncov::cli {

/// Exit codes of the command line tool.
enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2 };

/// Runs one command line (args excludes the program name). Output goes to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nncov::cli
