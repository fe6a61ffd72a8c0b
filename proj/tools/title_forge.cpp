#include <iostream>
#include <string>
#include <vector>

#include "title_forge/cli.hpp"

int main(int argc, char** argv) {
  title_forge::configure_logging();
  std::vector<std::string> args(argv + 1, argv + argc);
  return title_forge::run_cli(args, std::cout, std::cerr);
}
