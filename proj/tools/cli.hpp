#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace modforge::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kData = 2,
    kConstraint = 3,
};

// Entry point of the `modforge` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace modforge::cli
