#include <iostream>

#include "patchcert/cli.hpp"

int main(int argc, char** argv) { return patchcert::run_cli(argc, argv, std::cout, std::cerr); }
