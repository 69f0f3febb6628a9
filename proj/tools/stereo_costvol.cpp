#include <iostream>

#include "costvol/cli.hpp"

int main(int argc, char** argv) { return costvol::cli::run(argc, argv, std::cout, std::cerr); }
