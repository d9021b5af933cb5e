#include <string>
#include <vector>

#include "divpref/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return divpref::cli::run(args);
}
