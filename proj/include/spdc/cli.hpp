#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spdc::cli {

enum ExitCode : int {
  success = 0,
  usage = 2,
  validation = 3,
  numerical = 4,
};

/// Runs one command line (without the program name) and returns the exit
/// code. Results and the resolved configuration go to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Grid spec: "a,b,c", "lin:start:stop:count" or "log:start:stop:count".
std::vector<double> parse_grid(const std::string& spec);

/// Thread count from SPDC_THREADS, 1 when unset or malformed.
int default_threads();

}  // namespace spdc::cli
