#include <iostream>

#include "paraspace/service/cli.hpp"

int main(int argc, char** argv) {
    return paraspace::service::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
