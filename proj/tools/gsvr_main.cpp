#include <string>
#include <vector>

#include "gsvr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gsvr::run_cli(args);
}
