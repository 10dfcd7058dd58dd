#include "reflectqa/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return reflectqa::run_cli(argc, argv, std::cout, std::cerr); }
