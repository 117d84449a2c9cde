#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace poimatch::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitMissingInput = 4,
  kExitSchema = 5,
  kExitRuntime = 6,
  kExitPortInUse = 7,
};

// Runs the command line `args` (args[0] is the program name). Results and
// progress go to `out`; failures print one JSON line
// {"error": kind, "message": ..., "exit_code": n} to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace poimatch::cli
