#include <string>
#include <vector>

#include "trajgp/cli.hpp"

int main(int argc, char** argv) {
  return trajgp::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
