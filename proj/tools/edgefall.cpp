#include "edgefall/cli.hpp"

int main(int argc, char** argv) { return edgefall::cli::run(argc, argv); }
