#pragma once

#include <iosfwd>

namespace trajtrack {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

/// Entry point of the trajtrack tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trajtrack
