#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) { return memcap::cli::main_entry(argc, argv, std::cout, std::cerr); }
