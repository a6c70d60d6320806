#include "asvae/cli.hpp"

int main(int argc, char** argv) {
  return asvae::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
