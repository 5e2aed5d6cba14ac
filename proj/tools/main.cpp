#include "ddgen/cli.hpp"

int main(int argc, char** argv) { return ddgen::cli::run(argc, argv); }
