// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "megc/cli.hpp"

int main(int argc, char** argv) { return megc::cli::run(argc, argv, std::cout, std::cerr); }
