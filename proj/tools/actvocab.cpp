#include <iostream>

#include "actvocab/cli.hpp"

int main(int argc, char** argv) { return actvocab::cli::run(argc, argv, std::cout, std::cerr); }
