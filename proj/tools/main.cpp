#include <iostream>

#include "hcil/cli.hpp"

int main(int argc, char** argv) { return hcil::run_cli(argc, argv, std::cout, std::cerr); }
