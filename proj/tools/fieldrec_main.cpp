#include "fieldrec/scenario.hpp"

#include <iostream>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fieldrec::cli_run(args, std::cout, std::cerr);
}
