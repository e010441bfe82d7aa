// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "stgm/cli.hpp"

int main(int argc, char** argv) { return stgm::cli::run(argc, argv, std::cout, std::cerr); }
