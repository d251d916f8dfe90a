#include <iostream>

#include "hdid/cli.hpp"

int main(int argc, char** argv) { return hdid::cli::run_cli(argc, argv, std::cout, std::cerr); }
