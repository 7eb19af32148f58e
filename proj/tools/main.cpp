#include "lpcgmn/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return lpcgmn::cli::run(argc, argv, std::cout, std::cerr); }
