#include <iostream>

#include "symreg/cli.hpp"

int main(int argc, char** argv) { return symreg::cli::run_cli(argc, argv, std::cout, std::cerr); }
