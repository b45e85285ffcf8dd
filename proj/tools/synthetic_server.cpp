#include <iostream>

#include "geoprobe/cli.hpp"

int main(int argc, char** argv) {
  std::ios::sync_with_stdio(false);
  return geoprobe::cli::run_synthetic_server(argc, argv, std::cin, std::cout, std::cerr);
}
