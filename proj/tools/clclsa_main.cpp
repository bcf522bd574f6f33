#include "clclsa/cli.hpp"

int main(int argc, char** argv) { return clclsa::cli::dispatch(argc, argv); }
