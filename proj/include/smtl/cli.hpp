#pragma once

#include <iosfwd>

namespace smtl {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitArtifact = 4,
  kExitVerification = 5,
};

// Environment variable that overrides the configured output directory
// (an explicit --out still wins).
inline constexpr const char* kOutDirEnv = "SMTL_OUT_DIR";

// Entry point of the `smtl` tool: generate, train, eval, report, gradcheck.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace smtl
