// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "metaanchor/cli.hpp"

int main(int argc, char** argv) { return metaanchor::run_cli(argc, argv, std::cout, std::cerr); }
