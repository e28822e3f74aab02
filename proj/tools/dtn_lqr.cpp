#include <iostream>

#include "dtnlqr/commands.hpp"

int main(int argc, char** argv) { return dtnlqr::run(argc, argv, std::cout, std::cerr); }
