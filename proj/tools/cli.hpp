#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace necti::cli {

// Runs the command line `args` (without the program name). Returns 0 on
// success, 1 on runtime failure and 2 on usage errors; diagnostics go to
// `err` as a single line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace necti::cli
