#include <iostream>

#include "smtl/cli.hpp"

int main(int argc, char** argv) { return smtl::run_cli(argc, argv, std::cout, std::cerr); }
