#pragma once

#include <ostream>

namespace dtnlqr {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitMissingFile = 2,
  kExitSchema = 3,
  kExitBlowUp = 4,
  kExitInfeasibleTimers = 5,
};

/// Entry point of `dtn-lqr`. Reports go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dtnlqr
