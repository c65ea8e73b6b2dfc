#include <string>
#include <vector>

#include "agentask/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return agentask::run_command(args);
}
