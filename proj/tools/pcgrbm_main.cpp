#include <iostream>

#include "pcgrbm/cli.hpp"

int main(int argc, char** argv) { return pcgrbm::run_cli(argc, argv, std::cout, std::cerr); }
