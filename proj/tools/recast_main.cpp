#include "recast/cli.hpp"

int main(int argc, char** argv) { return recast::cli::run(argc, argv); }
