#include <iostream>

#include "xbf_cli/cli.hpp"

int main(int argc, char** argv) { return xbf::cli::run_cli(argc, argv, std::cout, std::cerr); }
