#include <iostream>

#include "geoprobe/cli.hpp"

int main(int argc, char** argv) { return geoprobe::cli::run_cli(argc, argv, std::cout, std::cerr); }
