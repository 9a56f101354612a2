#include <iostream>

#include "rtx/cli.hpp"

int main(int argc, char** argv) { return rtx::run_cli(argc, argv, std::cout, std::cerr); }
