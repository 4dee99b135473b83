#include <iostream>

#include "lmmsel/cli/commands.hpp"

int main(int argc, char** argv) { return lmmsel::cli::run(argc, argv, std::cout, std::cerr); }
