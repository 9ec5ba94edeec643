#pragma once

#include <iosfwd>

namespace star::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parses argv, runs one subcommand and returns the process exit code.
/// Messages go to `out` and `err`; library logs go through spdlog.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace star::cli
