#include "mfbsde/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return mfbsde::cli::run(argc, argv, std::cout, std::cerr); }
