#include <iostream>
#include <string>
#include <vector>

#include "flowstyle/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return flowstyle::run_cli(args, std::cout, std::cerr);
}
