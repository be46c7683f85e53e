#pragma once

#include <string>
#include <vector>

namespace uiess {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

/// Entry point of the `uiess` command. argv[0] is the program name.
int run_cli(const std::vector<std::string>& argv);

}  // namespace uiess
