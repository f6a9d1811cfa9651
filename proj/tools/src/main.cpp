#include <iostream>

#include "cwc/cli/commands.hpp"

int main(int argc, char** argv) {
  cwc::cli::tune_allocator();
  return cwc::cli::run(argc, argv, std::cout, std::cerr);
}
