#include <vector>

#include "fcre/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fcre::run_cli(args);
}
