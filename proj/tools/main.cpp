#include <iostream>
#include <string>
#include <vector>

#include "paramshift/cli.hpp"
#include "paramshift/runtime.hpp"

int main(int argc, char** argv) {
  paramshift::configure_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return paramshift::run_cli(args, std::cout, std::cerr);
}
