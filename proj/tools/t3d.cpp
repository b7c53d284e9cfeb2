#include <iostream>

#include "t3d/cli/cli.hpp"

int main(int argc, char** argv) { return t3d::cli::run(argc, argv, std::cout, std::cerr); }
