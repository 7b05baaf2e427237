#pragma once

#include <string>
#include <vector>

// Command-line front end: model-check, schedule, simulate, variance,
// lyapunov, gradient-check, occupation, benchmark-1d.  Artifacts are
// byte-reproducible for identical inputs; wall-clock metadata goes to a
// ".meta.json" sidecar next to each output file.
namespace hwdiff::cli {

// Runs one subcommand; returns the process exit code (0 success,
// 1 validation/usage error, 2 runtime failure).
int run_command(const std::vector<std::string>& args);

// Shortest round-trip decimal formatting used for all CSV numbers.
std::string format_double(double v);

}  // namespace hwdiff::cli
