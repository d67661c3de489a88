#include <iostream>

#include "unimom/cli/app.hpp"

int main(int argc, char** argv) { return unimom::cli::run(argc, argv, std::cout, std::cerr); }
