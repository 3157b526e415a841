#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hypersde::cli {

enum ExitCode { exit_pass = 0, exit_check_failed = 1, exit_usage = 2 };

/// Runs one command line (args[0] is the program name). Summary lines go to
/// out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hypersde::cli
