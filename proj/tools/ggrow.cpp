// SPDX-License-Identifier: Apache-2.0

#include "ggrow/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ggrow::run_cli(argc, argv, std::cout, std::cerr); }
