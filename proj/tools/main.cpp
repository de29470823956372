#include <iostream>

#include "cog/cli.hpp"

int main(int argc, char** argv) { return cog::cli::run(argc, argv, std::cout, std::cerr); }
