#include "pmatch/cli.hpp"

int main(int argc, char** argv) {
  return pmatch::cli::run(std::vector<std::string>(argv, argv + argc));
}
