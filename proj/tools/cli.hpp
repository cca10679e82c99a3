#pragma once

#include <string>
#include <vector>

namespace avemdpo::cli {

// Runs one command-line invocation (args exclude the program name).
// Returns 0 on success, 1 on usage or input validation errors, 2 when a
// validated run fails while computing or writing outputs.
int run(const std::vector<std::string>& args);

}  // namespace avemdpo::cli
