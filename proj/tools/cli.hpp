#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nseg::cli {

// Runs one command line (args excludes the program name). Returns the
// process exit status; failures are reported on err as one JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nseg::cli
