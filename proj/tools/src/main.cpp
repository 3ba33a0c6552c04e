// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include "lcurve_cli/commands.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return lcurve::cli::run_cli(args, std::cout, std::cerr, lcurve::cli::environment_snapshot());
}
