#include <string>
#include <vector>

#include "gazekit/harness/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gazekit::harness::run_cli(args);
}
