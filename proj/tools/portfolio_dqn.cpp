#include <iostream>

#include "pdqn/cli.hpp"

int main(int argc, char** argv) { return pdqn::run_cli(argc, argv, std::cout, std::cerr); }
