#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace topopt::cli {

enum ExitCode { exit_converged = 0, exit_error = 1, exit_budget = 2 };

/// Entry point shared by the `topopt` binary and the tests. args excludes
/// the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace topopt::cli
