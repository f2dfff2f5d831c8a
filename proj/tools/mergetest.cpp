#include <iostream>
#include <string>
#include <vector>

#include "mergetest/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return mergetest::run_cli(args, std::cout, std::cerr);
}
