#include <iostream>
#include <string>
#include <vector>

#include "do3d/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return do3d::run_cli(args, std::cout, std::cerr);
}
