#include <iostream>

#include "posp/cli.hpp"

int main(int argc, char** argv) { return posp::cli::main(argc, argv, std::cout, std::cerr); }
