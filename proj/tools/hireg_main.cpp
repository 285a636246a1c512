#include <iostream>
#include <string>
#include <vector>

#include "hireg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return hireg::cli::run(args, std::cout, std::cerr);
}
