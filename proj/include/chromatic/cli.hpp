#pragma once

#include <ostream>

namespace chromatic::cli {

enum ExitCode : int { kSuccess = 0, kConfigError = 1, kRuntimeFailure = 2 };

/// Entry point for the `chromatic` tool. Subcommands: train, baseline, eval,
/// analyze, transfer, worker, envs.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chromatic::cli
