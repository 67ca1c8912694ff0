#include "ael/cli.hpp"

int main(int argc, char** argv) { return ael::cli::main(argc, argv); }
