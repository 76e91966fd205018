#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spatialqr {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // verification / equivalence / numeric failure
  kExitUsage = 2,    // bad arguments or unreadable input
  kExitDeadlock = 3,
};

/// Runs the command line `args` (args[0] is the program name). Errors are
/// reported on `err` as a single "error: <kind>: <message>" line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spatialqr
