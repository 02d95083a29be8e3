#include <iostream>

#include "dmaudit/cli.hpp"

int main(int argc, char** argv) { return dmaudit::cli::run_cli(argc, argv, std::cout, std::cerr); }
