#include <iostream>

#include "bclr/cli.hpp"

int main(int argc, char** argv) { return bclr::cli::run(argc, argv, std::cout, std::cerr); }
