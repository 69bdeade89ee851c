#include <iostream>

#include "mrinet/cli.hpp"

int main(int argc, char **argv) {
  std::vector<std::string> args(argv, argv + argc);
  return mrinet::run_cli(args, std::cout, std::cerr);
}
