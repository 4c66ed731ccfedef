#include <iostream>
#include <string>
#include <vector>

#include "xprospect/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return xprospect::cli::run(args, std::cout, std::cerr);
}
