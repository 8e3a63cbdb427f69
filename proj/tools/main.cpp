#include <iostream>

#include "jssu/cli.hpp"

int main(int argc, char** argv) { return jssu::run_cli(argc, argv, std::cout, std::cerr); }
