#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace lrd::cli {

enum ExitCode : int {
    kOk = 0,
    kValidation = 1,  // bad arguments, config or tolerance failure
    kData = 2,        // I/O or malformed/non-finite data
    kNumeric = 3,     // numeric or internal failure
};

/// Entry point shared by the `lrd` binary and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lrd::cli
