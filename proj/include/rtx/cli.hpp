#pragma once

#include <iosfwd>

namespace rtx {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Environment variable that replaces the configured output directory.
inline constexpr const char* kOutputDirEnv = "RTX_OUTPUT_DIR";

/// Entry point of the `rtxnet` executable; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rtx
