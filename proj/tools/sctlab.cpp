#include <iostream>

#include "sctlab/cli.hpp"

int main(int argc, char** argv) { return sctlab::cli::dispatch(argc, argv, std::cout, std::cerr); }
