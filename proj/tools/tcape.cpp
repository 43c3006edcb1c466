#include <iostream>

#include "tcape/cli.hpp"

int main(int argc, char** argv) { return tcape::run_cli(argc, argv, std::cout, std::cerr); }
