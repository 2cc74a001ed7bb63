#include <string>
#include <vector>

#include "stftr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stftr::run_cli(args);
}
