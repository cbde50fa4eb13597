#include <iostream>

#include "trajtrack/cli.hpp"

int main(int argc, char** argv) { return trajtrack::run_cli(argc, argv, std::cout, std::cerr); }
