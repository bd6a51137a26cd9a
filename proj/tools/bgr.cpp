#include <bgr/cli.hpp>

#include <iostream>

int main(int argc, char** argv) { return bgr::cli::main_entry(argc, argv, std::cout, std::cerr); }
