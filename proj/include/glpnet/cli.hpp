#pragma once

#include <string>
#include <vector>

namespace glpnet {

// full command-line entry point; returns the process exit code
// (0 success, 1 usage, 2 data/config error, 3 numerical failure)
int run_cli(int argc, const char* const* argv);

// convenience for in-process driving: args exclude the program name
int run_cli(const std::vector<std::string>& args);

}  // namespace glpnet
