#include <iostream>

#include "lla/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return lla::run_cli(args, std::cout, std::cerr);
}
