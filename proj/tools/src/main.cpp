#include <iostream>

#include "brainage_cli/cli.hpp"

int main(int argc, char** argv) { return brainage::cli::run(argc, argv, std::cout, std::cerr); }
