#include <iostream>

#include "bdyamabe/cli/commands.hpp"

int main(int argc, char** argv) {
  return bdyamabe::cli::run(argc, argv, {std::cout, std::cerr});
}
