#include "gnes/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gnes::cli_main(argc, argv, std::cout, std::cerr); }
