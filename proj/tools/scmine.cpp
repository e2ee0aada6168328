#include <string>
#include <vector>

#include "scmine/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return scmine::cli::run(std::move(args));
}
