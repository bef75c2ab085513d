#pragma once

#include <string>
#include <vector>

namespace cplab {

inline constexpr const char* kVersion = "cplab 1.0.0";

// Exit status of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitViolation = 2;

// Batch runner. args[0] is the program name. Each subcommand writes <out>.json (full report with
// the resolved config) and <out>.csv (plot data, one header line).
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace cplab
