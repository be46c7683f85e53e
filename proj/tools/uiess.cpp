#include <string>
#include <vector>

#include "uiess/cli.hpp"

int main(int argc, char** argv) { return uiess::run_cli(std::vector<std::string>(argv, argv + argc)); }
