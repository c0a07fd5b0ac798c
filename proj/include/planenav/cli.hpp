#pragma once

#include <string>
#include <vector>

namespace planenav::cli {

// Command-line entry point shared by the binary and the test harness.
// args excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args);

}  // namespace planenav::cli
