#include <iostream>

#include "nfw/cli.hpp"

int main(int argc, char** argv) { return nfw::cli::run(argc, argv, std::cout, std::cerr); }
