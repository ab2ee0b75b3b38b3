#include <iostream>

#include "istftnet/cli.hpp"

int main(int argc, char** argv) { return istftnet::cli::run(argc, argv, std::cout, std::cerr); }
