#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace explkit {

/// Runs the explkit command line. `args` excludes the program name. Returns
/// the process exit code; failures print a JSON error record to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace explkit
